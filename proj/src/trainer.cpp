#include "kiras/trainer.hpp"

#include "kiras/rewards.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <thread>

namespace kiras {
namespace {

constexpr double kControlDt = EnvSim::kDt * EnvSim::kDecimation;
constexpr int kEvalSteps = 120;
constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 1.0;

const std::array<TerrainType, 5> kAllTerrains = {TerrainType::Flat, TerrainType::Slope,
                                                 TerrainType::Bars, TerrainType::DiscreteFootholds,
                                                 TerrainType::Stairs};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// deterministic regardless of thread count: each index runs against
// preallocated slots, shared draws stay outside
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[static_cast<size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int thread_count_from_env() {
  const char* raw = std::getenv("KIRAS_THREADS");
  if (raw == nullptr) return 1;
  const int n = std::atoi(raw);
  return std::clamp(n, 1, 256);
}

Vec net_params(const DenseNet& net) {
  Vec p(net.param_count());
  for (std::int64_t i = 0; i < net.param_count(); ++i) p(i) = net.get_param(i);
  return p;
}

void set_net_params(DenseNet& net, const Vec& p, const std::string& name) {
  if (p.size() != net.param_count())
    throw IoError("checkpoint parameter count mismatch for " + name);
  for (std::int64_t i = 0; i < p.size(); ++i) net.set_param(i, p(i));
}

void quantize_net(DenseNet& net) {
  for (std::int64_t i = 0; i < net.param_count(); ++i)
    net.set_param(i, static_cast<double>(static_cast<float>(net.get_param(i))));
}

Vec flatten_moments(const std::vector<Mat>& mw, const std::vector<Vec>& mb) {
  std::int64_t total = 0;
  for (size_t l = 0; l < mw.size(); ++l)
    total += static_cast<std::int64_t>(mw[l].size()) + mb[l].size();
  Vec out(total);
  std::int64_t at = 0;
  for (size_t l = 0; l < mw.size(); ++l) {
    for (Eigen::Index i = 0; i < mw[l].size(); ++i) out(at++) = mw[l].data()[i];
    for (Eigen::Index i = 0; i < mb[l].size(); ++i) out(at++) = mb[l](i);
  }
  return out;
}

void restore_moments(std::vector<Mat>& mw, std::vector<Vec>& mb, const Vec& flat,
                     const std::string& name) {
  std::int64_t total = 0;
  for (size_t l = 0; l < mw.size(); ++l)
    total += static_cast<std::int64_t>(mw[l].size()) + mb[l].size();
  if (flat.size() != total) throw IoError("checkpoint moment count mismatch for " + name);
  std::int64_t at = 0;
  for (size_t l = 0; l < mw.size(); ++l) {
    for (Eigen::Index i = 0; i < mw[l].size(); ++i) mw[l].data()[i] = flat(at++);
    for (Eigen::Index i = 0; i < mb[l].size(); ++i) mb[l](i) = flat(at++);
  }
}

void add_adam(CheckpointFile& f, const std::string& prefix, const AdamState& a) {
  f.add_f64(prefix + "/m", flatten_moments(a.m_w, a.m_b));
  f.add_f64(prefix + "/v", flatten_moments(a.v_w, a.v_b));
  Vec meta(4);
  meta << a.learning_rate, a.beta1, a.beta2, a.epsilon;
  f.add_f64(prefix + "/meta", meta);
  f.add_i64_scalar(prefix + "/step", a.step_count);
}

void read_adam(const CheckpointFile& f, const std::string& prefix, AdamState& a) {
  restore_moments(a.m_w, a.m_b, f.f64(prefix + "/m"), prefix);
  restore_moments(a.v_w, a.v_b, f.f64(prefix + "/v"), prefix);
  const Vec meta = f.f64(prefix + "/meta");
  if (meta.size() != 4) throw IoError("bad optimizer metadata for " + prefix);
  a.learning_rate = meta(0);
  a.beta1 = meta(1);
  a.beta2 = meta(2);
  a.epsilon = meta(3);
  a.step_count = f.i64_scalar(prefix + "/step");
}

void add_adam_vec(CheckpointFile& f, const std::string& prefix, const AdamVecState& a) {
  f.add_f64(prefix + "/m", a.m);
  f.add_f64(prefix + "/v", a.v);
  Vec meta(4);
  meta << a.learning_rate, a.beta1, a.beta2, a.epsilon;
  f.add_f64(prefix + "/meta", meta);
  f.add_i64_scalar(prefix + "/step", a.step_count);
}

void read_adam_vec(const CheckpointFile& f, const std::string& prefix, AdamVecState& a) {
  const Vec m = f.f64(prefix + "/m");
  const Vec v = f.f64(prefix + "/v");
  if (m.size() != a.m.size() || v.size() != a.v.size())
    throw IoError("checkpoint moment count mismatch for " + prefix);
  a.m = m;
  a.v = v;
  const Vec meta = f.f64(prefix + "/meta");
  if (meta.size() != 4) throw IoError("bad optimizer metadata for " + prefix);
  a.learning_rate = meta(0);
  a.beta1 = meta(1);
  a.beta2 = meta(2);
  a.epsilon = meta(3);
  a.step_count = f.i64_scalar(prefix + "/step");
}

void insert_zero_col(Mat& m, int index) {
  Mat wide(m.rows(), m.cols() + 1);
  wide.leftCols(index) = m.leftCols(index);
  wide.col(index).setZero();
  wide.rightCols(m.cols() - index) = m.rightCols(m.cols() - index);
  m = wide;
}

void insert_zero_row(Mat& m, int index) {
  Mat tall(m.rows() + 1, m.cols());
  tall.topRows(index) = m.topRows(index);
  tall.row(index).setZero();
  tall.bottomRows(m.rows() - index) = m.bottomRows(m.rows() - index);
  m = tall;
}

void widen_adam_input(AdamState& a, int index) {
  insert_zero_col(a.m_w.front(), index);
  insert_zero_col(a.v_w.front(), index);
}

void widen_adam_output(AdamState& a, int index) {
  insert_zero_row(a.m_w.back(), index);
  insert_zero_row(a.v_w.back(), index);
  a.m_b.back() = RunningStat::inserted(a.m_b.back(), index, 0.0);
  a.v_b.back() = RunningStat::inserted(a.v_b.back(), index, 0.0);
}

std::vector<int> net_dims(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> dims;
  dims.reserve(hidden.size() + 2);
  dims.push_back(in);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

const std::array<double RewardBreakdown::*, 19> kBreakdownFields = {
    &RewardBreakdown::collision,
    &RewardBreakdown::feet_contact_forces,
    &RewardBreakdown::action_rate,
    &RewardBreakdown::torques,
    &RewardBreakdown::delta_torques,
    &RewardBreakdown::tracking_lin_vel,
    &RewardBreakdown::tracking_ang_vel,
    &RewardBreakdown::feet_drag,
    &RewardBreakdown::ang_vel,
    &RewardBreakdown::stand_still,
    &RewardBreakdown::joint_acceleration,
    &RewardBreakdown::ang_vel_x,
    &RewardBreakdown::ang_vel_z,
    &RewardBreakdown::lin_vel_y,
    &RewardBreakdown::r_T,
    &RewardBreakdown::r_R,
    &RewardBreakdown::r_res,
    &RewardBreakdown::r_SI,
    &RewardBreakdown::r_c};

const std::array<const char*, 19> kBreakdownNames = {
    "rew_collision",      "rew_feet_contact_forces", "rew_action_rate",
    "rew_torques",        "rew_delta_torques",       "rew_tracking_lin_vel",
    "rew_tracking_ang_vel", "rew_feet_drag",         "rew_ang_vel",
    "rew_stand_still",    "rew_joint_acceleration",  "rew_ang_vel_x",
    "rew_ang_vel_z",      "rew_lin_vel_y",           "r_T",
    "r_R",                "r_res",                   "r_SI",
    "r_c"};

}  // namespace

double mean_cosine(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  const size_t n = std::min(a.size(), b.size());
  if (n == 0) throw InvalidArgument("empty trajectory in cosine comparison");
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double na = a[i].norm();
    const double nb = b[i].norm();
    if (na == 0.0 || nb == 0.0) continue;
    sum += a[i].dot(b[i]) / (na * nb);
  }
  return sum / static_cast<double>(n);
}

std::vector<ScriptEntry> parse_replay_script(const std::string& text) {
  std::vector<ScriptEntry> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    line_no += 1;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    ScriptEntry e;
    if (!(ls >> e.time)) {
      std::string rest;
      if (ls.clear(), ls.str(line), !(ls >> rest)) continue;  // blank line
      throw IoError("script line " + std::to_string(line_no) +
                    ": expected 'time skill_index target_vx'");
    }
    if (!(ls >> e.skill >> e.target_vx))
      throw IoError("script line " + std::to_string(line_no) +
                    ": expected 'time skill_index target_vx'");
    std::string extra;
    if (ls >> extra)
      throw IoError("script line " + std::to_string(line_no) + ": trailing tokens");
    if (!std::isfinite(e.time) || !std::isfinite(e.target_vx) || e.time < 0.0)
      throw IoError("script line " + std::to_string(line_no) + ": invalid values");
    if (out.empty() && e.time != 0.0)
      throw IoError("script line " + std::to_string(line_no) + ": first entry must be at time 0");
    if (!out.empty() && e.time < out.back().time)
      throw IoError("script line " + std::to_string(line_no) + ": times must be non-decreasing");
    out.push_back(e);
  }
  if (out.empty()) throw IoError("replay script has no entries");
  return out;
}

std::vector<ScriptEntry> load_replay_script(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open script file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_replay_script(buf.str());
}

Trainer::Trainer(const TrainConfig& cfg, SkillSet skills)
    : cfg_(cfg),
      skills_(std::move(skills)),
      dims_(network_dims(cfg, skills_.count())),
      ref_terrain_(generate_terrain(TerrainType::Flat, 0, 0)),
      premium_(skills_, cfg.episode_steps, cfg.premium_capacity),
      stats_(dims_.frame),
      sampler_(skills_.count(), cfg.window_size) {
  validate_config(cfg_);
  if (cfg_.preset != "desk")
    throw InvalidArgument("preset '" + cfg_.preset + "' records dimensions only and cannot run");
  if (cfg_.v_dim != 2)
    throw InvalidArgument("the planar robot exposes a 2d base velocity; v_dim must be 2");
  policy_ = GaussianPolicy(net_dims(dims_.actor_in, cfg_.actor_hidden, dims_.actor_out),
                           cfg_.log_std_init);
  critic_task_ = DenseNet(net_dims(dims_.critic_in, cfg_.critic_hidden, 1));
  critic_imit_ = DenseNet(net_dims(dims_.critic_in, cfg_.critic_hidden, 1));
  ece_ = EceNets(cfg_.history_frames, dims_.prop, skills_.count(), cfg_.v_dim, cfg_.lat_dim,
                 cfg_.enc_hidden, cfg_.dec_hidden);
  disc_ = Discriminator(dims_.frame, cfg_.disc_hidden, cfg_.learning_rate);
  ppo_opt_ = PpoOptimizers{AdamState::for_net(policy_.actor, cfg_.learning_rate),
                           AdamVecState::for_vec(policy_.log_std, cfg_.learning_rate),
                           AdamState::for_net(critic_task_, cfg_.learning_rate),
                           AdamState::for_net(critic_imit_, cfg_.learning_rate)};
  ece_opt_ = EceOptimizers::for_nets(ece_, cfg_.learning_rate);
  envs_.resize(static_cast<size_t>(cfg_.num_envs));
  env_rngs_.resize(static_cast<size_t>(cfg_.num_envs));
  threads_ = thread_count_from_env();
}

Trainer::Trainer(const TrainConfig& cfg)
    : Trainer(cfg, cfg.keyframe_file.empty() ? builtin_skills() : load_keyframes(cfg.keyframe_file)) {
  Rng master(cfg_.seed);
  policy_.actor.init_orthogonal(master, 0.01);
  critic_task_.init_orthogonal(master);
  critic_imit_.init_orthogonal(master);
  ece_.encoder.init_orthogonal(master);
  ece_.decoder.init_orthogonal(master);
  ece_.prior.init_orthogonal(master);
  disc_.net.init_orthogonal(master);
  scheduler_rng_.seed(master());
  train_rng_.seed(master());
  for (auto& r : env_rngs_) r.seed(master());
  for (int i = 0; i < cfg_.num_envs; ++i) set_env_terrain(i, TerrainType::Flat, 0);
  reset_all_envs();
}

std::uint64_t Trainer::terrain_seed(int env, TerrainType type, int level) const {
  std::uint64_t h = splitmix64(cfg_.seed + 0x51ed2701ull);
  h = splitmix64(h ^ static_cast<std::uint64_t>(env));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(type) << 8));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(level) << 16));
  return h;
}

void Trainer::set_env_terrain(int i, TerrainType type, int level) {
  EnvRunner& env = envs_[static_cast<size_t>(i)];
  env.ttype = type;
  env.level = level;
  env.sim.set_terrain(generate_terrain(type, level, terrain_seed(i, type, level)));
}

Mat Trainer::reference_obs() const {
  const int n = skills_.count();
  Mat ref(dims_.critic_in, n);
  for (int s = 0; s < n; ++s) {
    const Keyframe& k = skills_.keyframes[static_cast<size_t>(s)];
    const RobotState state = keyframe_pose_state(k);
    const ObservationBundle b = observe(state, Command{0.0}, onehot(s, n), ref_terrain_,
                                        Eigen::Vector4d::Zero(), k.joint_pos);
    ref.col(s) = b.privileged;
  }
  return ref;
}

Vec Trainer::skill_values() const {
  const Mat out = critic_task_.forward(reference_obs());
  return out.row(0).transpose();
}

Vec Trainer::sampling_probs() const { return SkillSampler::skill_probs(skill_values()); }

void Trainer::reset_env(int i) {
  EnvRunner& env = envs_[static_cast<size_t>(i)];
  Rng& rng = env_rngs_[static_cast<size_t>(i)];
  env.skill = sampler_.sample(skill_values(), scheduler_rng_);
  env.command = sample_command(rng, cfg_.command_min, cfg_.command_max);
  env.sim.set_randomization(sample_randomization(rng));
  const InitNoise noise{cfg_.init_joint_noise, cfg_.init_height_noise, cfg_.init_pitch_noise_deg,
                        cfg_.cross_skill_prob};
  const RobotState s0 = sample_initial_state(skills_, env.skill, env.sim.terrain(), 0.0, rng, noise);
  env.sim.reset(s0);
  rebuild_env_derived(i);
}

// everything past the sampled (state, skill, command, randomization) is a
// pure function of them at a reset boundary
void Trainer::rebuild_env_derived(int i) {
  EnvRunner& env = envs_[static_cast<size_t>(i)];
  env.default_joints = skills_.keyframes[static_cast<size_t>(env.skill)].joint_pos;
  const ObservationBundle b =
      observe(env.sim.state(), env.command, onehot(env.skill, skills_.count()), env.sim.terrain(),
              Eigen::Vector4d::Zero(), env.default_joints);
  env.history = ObsHistory(cfg_.history_frames, dims_.prop);
  env.history.reset(b.prop);
  env.prev_action.setZero();
  env.prev_torques.setZero();
  env.steps = 0;
  env.start_x = env.sim.state().base_x;
  env.last_frame = b.frame;
  env.frames.clear();
  env.rc.clear();
}

void Trainer::reset_all_envs() {
  for (int i = 0; i < cfg_.num_envs; ++i) reset_env(i);
}

void Trainer::stage_transition() {
  stats_.freeze();
  flat_actor_ = policy_.actor;
  has_flat_ = true;
  const std::vector<TerrainType> mix = terrain_mix(cfg_);
  for (int i = 0; i < cfg_.num_envs; ++i)
    set_env_terrain(i, mix[static_cast<size_t>(i) % mix.size()], 0);
  reset_all_envs();
}

void Trainer::iterate() {
  if (iteration_ >= cfg_.t2) throw UsageError("training already finished");
  if (iteration_ >= cfg_.t1 && !has_flat_) stage_transition();
  const bool stage1 = iteration_ < cfg_.t1;
  const int E = cfg_.num_envs;
  const int H = cfg_.horizon;
  const int n = skills_.count();
  const std::int64_t B = static_cast<std::int64_t>(E) * H;
  const RunningStat stats0 = stats_;
  const RewardWeights weights{cfg_.w_term, cfg_.w_reg, cfg_.w_res, cfg_.w_sil};

  Mat actor_obs(dims_.actor_in, B);
  Mat critic_obs(dims_.critic_in, B);
  Mat actions(dims_.actor_out, B);
  Mat means(dims_.actor_out, B);
  Mat ece_hist(dims_.enc_in, B);
  Mat ece_onehot(n, B);
  Mat ece_v(cfg_.v_dim, B);
  Mat ece_onext(dims_.prop, B);
  Vec rewards_task(B);
  Vec rewards_imit(B);
  std::vector<std::uint8_t> dones(static_cast<size_t>(B), 0);
  std::vector<ImitationFrame> fprev(static_cast<size_t>(B));
  std::vector<ImitationFrame> fcur(static_cast<size_t>(B));
  std::vector<int> skill_at(static_cast<size_t>(B), 0);
  std::vector<RewardBreakdown> bds(static_cast<size_t>(B));

  std::vector<ObservationBundle> bundles(static_cast<size_t>(E));
  Mat hist_h(dims_.enc_in, E);
  Mat onehots(n, E);
  Mat aobs_h(dims_.actor_in, E);

  for (int h = 0; h < H; ++h) {
    parallel_for(E, threads_, [&](int i) {
      EnvRunner& env = envs_[static_cast<size_t>(i)];
      const Vec oh = onehot(env.skill, n);
      bundles[static_cast<size_t>(i)] = observe(env.sim.state(), env.command, oh,
                                                env.sim.terrain(), env.prev_action,
                                                env.default_joints);
      hist_h.col(i) = env.history.flat();
      onehots.col(i) = oh;
    });
    const Mat enc_out = ece_.encoder.forward(hist_h);
    for (int i = 0; i < E; ++i) {
      aobs_h.col(i).head(dims_.prop) = bundles[static_cast<size_t>(i)].prop;
      aobs_h.col(i).segment(dims_.prop, cfg_.v_dim) = enc_out.col(i).head(cfg_.v_dim);
      aobs_h.col(i).tail(cfg_.lat_dim) = enc_out.col(i).segment(cfg_.v_dim, cfg_.lat_dim);
    }
    const Mat mean_h = policy_.actor.forward(aobs_h);
    Mat flat_h;
    if (has_flat_) flat_h = flat_actor_.forward(aobs_h);

    std::atomic<bool> numeric_bad{false};
    parallel_for(E, threads_, [&](int i) {
      EnvRunner& env = envs_[static_cast<size_t>(i)];
      const std::int64_t idx = static_cast<std::int64_t>(i) * H + h;
      const Vec a = policy_.sample(mean_h.col(i), env_rngs_[static_cast<size_t>(i)]);
      const Eigen::Vector4d a4 = a;
      const Eigen::Vector4d pre_qd = env.sim.state().joint_vel;
      const double pre_vx = env.sim.state().base_vx;
      const double pre_vz = env.sim.state().base_vz;
      const Eigen::Vector4d targets = env.default_joints + cfg_.action_scale * a4;
      const StepResult sr = env.sim.step(targets);
      if (sr.diverged || !sr.state.finite()) {
        numeric_bad = true;
        return;
      }
      const ObservationBundle post = observe(sr.state, env.command, onehots.col(i),
                                             env.sim.terrain(), a4, env.default_joints);
      RewardInputs in;
      in.state = sr.state;
      in.prev_joint_vel = pre_qd;
      in.action = a;
      in.prev_action = env.prev_action;
      in.applied_torques = sr.torques;
      in.prev_torques = env.prev_torques;
      in.foot_contact = sr.foot_contact;
      in.normal_force = sr.normal_force;
      in.foot_vx = {sr.foot_vel[0].x, sr.foot_vel[1].x};
      in.command_vx = env.command.target_vx;
      in.default_joint_pos = env.default_joints;
      in.control_dt = kControlDt;
      double res_term = 0.0;
      if (has_flat_) res_term = residual_reward(a, flat_h.col(i), iteration_, cfg_.t1, cfg_.t2);
      double sil_term = 0.0;
      if (stage1)
        sil_term = sil_reward(disc_.net, stats0.normalize(env.last_frame.to_vec()),
                              stats0.normalize(post.frame.to_vec()));
      const RewardBreakdown bd = compute_rewards(in, sr.collision, res_term, sil_term, weights);
      if (!std::isfinite(bd.r_c) || !std::isfinite(bd.r_SI)) {
        numeric_bad = true;
        return;
      }
      actor_obs.col(idx) = aobs_h.col(i);
      critic_obs.col(idx) = bundles[static_cast<size_t>(i)].privileged;
      actions.col(idx) = a;
      means.col(idx) = mean_h.col(i);
      rewards_task(idx) = bd.r_c;
      rewards_imit(idx) = cfg_.w_sil * bd.r_SI;
      bds[static_cast<size_t>(idx)] = bd;
      fprev[static_cast<size_t>(idx)] = env.last_frame;
      fcur[static_cast<size_t>(idx)] = post.frame;
      skill_at[static_cast<size_t>(idx)] = env.skill;
      ece_hist.col(idx) = hist_h.col(i);
      ece_onehot.col(idx) = onehots.col(i);
      ece_v(0, idx) = pre_vx;
      ece_v(1, idx) = pre_vz;
      ece_onext.col(idx) = post.prop;
      const bool done = sr.collision || (env.steps + 1 >= cfg_.episode_steps);
      dones[static_cast<size_t>(idx)] = done ? 1 : 0;
      env.steps += 1;
      env.prev_action = a4;
      env.prev_torques = sr.torques;
      env.history.push(post.prop);
      env.last_frame = post.frame;
      env.frames.push_back(post.frame);
      env.rc.push_back(bd.r_c);
    });
    if (numeric_bad) throw NumericalError("non-finite simulation state or reward");

    for (int i = 0; i < E; ++i) {
      const std::int64_t idx = static_cast<std::int64_t>(i) * H + h;
      if (!dones[static_cast<size_t>(idx)]) continue;
      EnvRunner& env = envs_[static_cast<size_t>(i)];
      if (stage1 && static_cast<int>(env.frames.size()) == cfg_.episode_steps) {
        const std::vector<Vec> traj = normalize_frames(env.frames, stats0);
        const std::vector<Vec> ref =
            normalize_frames(premium_.keyframe_trajectory_of(env.skill), stats0);
        const double score =
            score_trajectory(traj, ref, env.rc, cfg_.lambda_dtw, cfg_.eq1_verbatim_sign);
        premium_.maybe_admit(env.skill, std::move(env.frames), score);
      }
      if (!stage1) {
        const double denom = env.command.target_vx * (cfg_.episode_steps * kControlDt);
        if (std::abs(denom) >= 0.05) {
          const double frac = (env.sim.state().base_x - env.start_x) / denom;
          const int new_level = update_curriculum(env.level, frac);
          if (new_level != env.level) set_env_terrain(i, env.ttype, new_level);
        }
      }
      reset_env(i);
    }
  }

  Mat boot(dims_.critic_in, E);
  parallel_for(E, threads_, [&](int i) {
    EnvRunner& env = envs_[static_cast<size_t>(i)];
    const ObservationBundle b = observe(env.sim.state(), env.command, onehot(env.skill, n),
                                        env.sim.terrain(), env.prev_action, env.default_joints);
    boot.col(i) = b.privileged;
  });

  if (stage1)
    for (std::int64_t idx = 0; idx < B; ++idx) stats_.update(fcur[static_cast<size_t>(idx)].to_vec());

  const Vec log_probs = policy_.log_prob_batch(means, actions);
  const Vec v_task = critic_task_.forward(critic_obs).row(0).transpose();
  const Vec v_imit = critic_imit_.forward(critic_obs).row(0).transpose();
  const Vec b_task = critic_task_.forward(boot).row(0).transpose();
  const Vec b_imit = critic_imit_.forward(boot).row(0).transpose();

  Vec adv_task(B), adv_imit(B), ret_task(B), ret_imit(B);
  for (int i = 0; i < E; ++i) {
    const std::int64_t lo = static_cast<std::int64_t>(i) * H;
    const std::vector<std::uint8_t> dseg(dones.begin() + lo, dones.begin() + lo + H);
    const GaeResult gt = gae(Vec(rewards_task.segment(lo, H)), Vec(v_task.segment(lo, H)), dseg,
                             b_task(i), cfg_.gamma, cfg_.gae_lambda);
    const GaeResult gi = gae(Vec(rewards_imit.segment(lo, H)), Vec(v_imit.segment(lo, H)), dseg,
                             b_imit(i), cfg_.gamma, cfg_.gae_lambda);
    adv_task.segment(lo, H) = gt.advantages;
    ret_task.segment(lo, H) = gt.returns;
    adv_imit.segment(lo, H) = gi.advantages;
    ret_imit.segment(lo, H) = gi.returns;
  }

  const auto [w1, w2] = omega_schedule(iteration_, cfg_.t1, cfg_.sigma);
  RolloutBatch batch;
  batch.actor_obs = std::move(actor_obs);
  batch.critic_obs = std::move(critic_obs);
  batch.actions = std::move(actions);
  batch.log_probs = log_probs;
  batch.advantages = mix_advantages(adv_task, adv_imit, w1, w2);
  batch.returns_task = ret_task;
  batch.returns_imit = ret_imit;
  const PpoParams params{cfg_.clip, cfg_.epochs, cfg_.minibatches, cfg_.entropy_coef,
                         cfg_.grad_clip};
  const PpoLosses losses = ppo_update(policy_, critic_task_, critic_imit_, ppo_opt_, batch, params,
                                      train_rng_);
  for (Eigen::Index j = 0; j < policy_.log_std.size(); ++j)
    policy_.log_std(j) = std::clamp(policy_.log_std(j), kLogStdMin, kLogStdMax);

  double disc_loss = 0.0;
  if (stage1) {
    std::uniform_int_distribution<std::int64_t> pick(0, B - 1);
    for (int rep = 0; rep < cfg_.disc_steps; ++rep) {
      Mat real(dims_.disc_in, cfg_.disc_batch);
      Mat fake(dims_.disc_in, cfg_.disc_batch);
      for (int b2 = 0; b2 < cfg_.disc_batch; ++b2) {
        const std::int64_t idx = pick(train_rng_);
        fake.col(b2).head(dims_.frame) = stats0.normalize(fprev[static_cast<size_t>(idx)].to_vec());
        fake.col(b2).tail(dims_.frame) = stats0.normalize(fcur[static_cast<size_t>(idx)].to_vec());
        const auto pair = premium_.sample_pair(skill_at[static_cast<size_t>(idx)], train_rng_);
        real.col(b2).head(dims_.frame) = stats0.normalize(pair.first->to_vec());
        real.col(b2).tail(dims_.frame) = stats0.normalize(pair.second->to_vec());
      }
      disc_loss = discriminator_update(disc_, real, fake);
    }
  }

  EceBatch eb;
  eb.history = std::move(ece_hist);
  eb.onehot = std::move(ece_onehot);
  eb.v_true = std::move(ece_v);
  eb.o_next = std::move(ece_onext);
  const EceTerms ece_terms = ece_loss_eval(ece_, eb, cfg_.beta, Mat::Zero(cfg_.lat_dim, B));
  const double mean_rc = rewards_task.mean();
  const double gate = adaboot_gate(mean_rc, ece_best_);
  if (uniform(train_rng_, 0.0, 1.0) < gate)
    ece_update(ece_, ece_opt_, eb, cfg_.beta, cfg_.grad_clip, train_rng_);
  ece_best_ = std::max(ece_best_, mean_rc);

  std::vector<double> reward_means(kBreakdownFields.size(), 0.0);
  for (std::int64_t idx = 0; idx < B; ++idx)
    for (size_t fi = 0; fi < kBreakdownFields.size(); ++fi)
      reward_means[fi] += bds[static_cast<size_t>(idx)].*kBreakdownFields[fi];
  for (double& m : reward_means) m /= static_cast<double>(B);

  last_row_ = metrics_row(iteration_, reward_means, disc_loss, ece_terms, w1, losses);
  iteration_ += 1;
}

std::string Trainer::metrics_header() const {
  std::ostringstream os;
  os << "iteration";
  for (const char* name : kBreakdownNames) os << "," << name;
  for (const auto& name : skills_.names) os << ",prob_" << name;
  for (const auto& name : skills_.names) os << ",eps_" << name;
  os << ",disc_loss,ece_total,ece_mse_v,ece_mse_o,ece_kl";
  for (TerrainType t : kAllTerrains) os << ",level_" << to_string(t);
  os << ",omega1,loss_actor,loss_value_task,loss_value_imit";
  return os.str();
}

std::string Trainer::metrics_row(std::int64_t t, const std::vector<double>& reward_means,
                                 double disc_loss, const EceTerms& ece_terms, double omega1,
                                 const PpoLosses& losses) const {
  std::ostringstream os;
  os << t;
  for (double m : reward_means) os << "," << fmt(m);
  const Vec probs = sampling_probs();
  for (int s = 0; s < skills_.count(); ++s) os << "," << fmt(probs(s));
  for (int s = 0; s < skills_.count(); ++s) os << "," << fmt(premium_.best_score(s));
  os << "," << fmt(disc_loss);
  os << "," << fmt(ece_terms.total) << "," << fmt(ece_terms.mse_v) << "," << fmt(ece_terms.mse_o)
     << "," << fmt(ece_terms.kl);
  for (TerrainType t2 : kAllTerrains) {
    double sum = 0.0;
    int count = 0;
    for (const auto& env : envs_) {
      if (env.ttype != t2) continue;
      sum += env.level;
      count += 1;
    }
    os << "," << fmt(count > 0 ? sum / count : 0.0);
  }
  os << "," << fmt(omega1);
  os << "," << fmt(losses.actor) << "," << fmt(losses.value_task) << "," << fmt(losses.value_imit);
  return os.str();
}

void Trainer::train_loop() { train_until(cfg_.t2); }

void Trainer::train_until(std::int64_t stop) {
  if (stop > cfg_.t2) stop = cfg_.t2;
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg_.out_dir, ec);
  const std::string mpath = cfg_.out_dir + "/metrics.csv";
  const bool fresh = !fs::exists(mpath) || fs::file_size(mpath) == 0;
  std::ofstream metrics(mpath, std::ios::app);
  if (!metrics) throw IoError("cannot open metrics file: " + mpath);
  if (fresh) metrics << metrics_header() << "\n";
  while (iteration_ < stop) {
    iterate();
    metrics << last_row_ << "\n";
    metrics.flush();
    if (iteration_ % cfg_.checkpoint_interval == 0 || iteration_ == cfg_.t2) {
      char name[40];
      std::snprintf(name, sizeof(name), "ckpt_%06lld.kira", static_cast<long long>(iteration_));
      save(cfg_.out_dir + "/" + name);
    }
  }
}

void Trainer::quantize_params() {
  quantize_net(policy_.actor);
  for (Eigen::Index i = 0; i < policy_.log_std.size(); ++i)
    policy_.log_std(i) = static_cast<double>(static_cast<float>(policy_.log_std(i)));
  quantize_net(critic_task_);
  quantize_net(critic_imit_);
  quantize_net(ece_.encoder);
  quantize_net(ece_.decoder);
  quantize_net(ece_.prior);
  quantize_net(disc_.net);
  if (has_flat_) quantize_net(flat_actor_);
}

CheckpointFile Trainer::to_file() const {
  CheckpointFile f;
  f.add_str("config", config_to_yaml(cfg_));
  f.add_str("skills", keyframes_to_yaml(skills_));
  f.add_i64_scalar("iteration", iteration_);
  f.add_i64_scalar("has_flat_actor", has_flat_ ? 1 : 0);
  f.add_f32("net/actor", net_params(policy_.actor));
  f.add_f32("net/log_std", policy_.log_std);
  f.add_f32("net/critic_task", net_params(critic_task_));
  f.add_f32("net/critic_imit", net_params(critic_imit_));
  f.add_f32("net/encoder", net_params(ece_.encoder));
  f.add_f32("net/decoder", net_params(ece_.decoder));
  f.add_f32("net/prior", net_params(ece_.prior));
  f.add_f32("net/disc", net_params(disc_.net));
  if (has_flat_) f.add_f32("net/flat_actor", net_params(flat_actor_));
  add_adam(f, "adam/actor", ppo_opt_.actor);
  add_adam_vec(f, "adam/log_std", ppo_opt_.log_std);
  add_adam(f, "adam/critic_task", ppo_opt_.critic_task);
  add_adam(f, "adam/critic_imit", ppo_opt_.critic_imit);
  add_adam(f, "adam/encoder", ece_opt_.encoder);
  add_adam(f, "adam/decoder", ece_opt_.decoder);
  add_adam(f, "adam/prior", ece_opt_.prior);
  add_adam(f, "adam/disc", disc_.adam);
  f.add_f64("stats/mean", stats_.mean());
  f.add_f64("stats/m2", stats_.m2());
  f.add_f64_scalar("stats/count", stats_.count());
  f.add_i64_scalar("stats/frozen", stats_.frozen() ? 1 : 0);
  Vec best(skills_.count());
  std::vector<std::int64_t> counts(static_cast<size_t>(skills_.count()));
  for (int s = 0; s < skills_.count(); ++s) {
    best(s) = premium_.best_score(s);
    counts[static_cast<size_t>(s)] = premium_.trajectory_count(s);
    for (int j = 0; j < premium_.trajectory_count(s); ++j) {
      const auto& traj = premium_.trajectory(s, j);
      Mat m(dims_.frame, static_cast<Eigen::Index>(traj.size()));
      for (size_t c = 0; c < traj.size(); ++c) m.col(static_cast<Eigen::Index>(c)) = traj[c].to_vec();
      char name[64];
      std::snprintf(name, sizeof(name), "premium/s%d/t%d", s, j);
      f.add_f64_mat(name, m);
    }
  }
  f.add_f64("premium/best", best);
  f.add_i64("premium/counts", counts);
  std::vector<std::int64_t> window(sampler_.window().begin(), sampler_.window().end());
  f.add_i64("sampler/window", window);
  f.add_f64_scalar("ece/best", ece_best_);
  std::vector<std::int64_t> tt(static_cast<size_t>(cfg_.num_envs));
  std::vector<std::int64_t> lv(static_cast<size_t>(cfg_.num_envs));
  for (int i = 0; i < cfg_.num_envs; ++i) {
    tt[static_cast<size_t>(i)] = static_cast<std::int64_t>(envs_[static_cast<size_t>(i)].ttype);
    lv[static_cast<size_t>(i)] = envs_[static_cast<size_t>(i)].level;
  }
  f.add_i64("env/terrain_type", tt);
  f.add_i64("env/level", lv);
  Mat env_state(14, cfg_.num_envs);
  Mat env_dr(8, cfg_.num_envs);
  std::vector<std::int64_t> env_skill(static_cast<size_t>(cfg_.num_envs));
  Vec env_cmd(cfg_.num_envs);
  for (int i = 0; i < cfg_.num_envs; ++i) {
    const EnvRunner& env = envs_[static_cast<size_t>(i)];
    const RobotState& s = env.sim.state();
    env_state.col(i) << s.base_x, s.base_z, s.pitch, s.base_vx, s.base_vz, s.pitch_rate,
        s.joint_pos, s.joint_vel;
    const DomainRandomization& dr = env.sim.randomization();
    env_dr.col(i) << dr.friction_coeff, dr.payload_kg, dr.com_shift, dr.push_velocity,
        dr.push_interval_s, dr.actuation_delay_s, dr.pd_stiffness_mult, dr.pd_damping_mult;
    env_skill[static_cast<size_t>(i)] = env.skill;
    env_cmd(i) = env.command.target_vx;
  }
  f.add_f64_mat("env/state", env_state);
  f.add_f64_mat("env/dr", env_dr);
  f.add_i64("env/skill", env_skill);
  f.add_f64("env/command", env_cmd);
  f.add_str("rng/train", rng_to_string(train_rng_));
  f.add_str("rng/scheduler", rng_to_string(scheduler_rng_));
  std::ostringstream envs_text;
  for (size_t i = 0; i < env_rngs_.size(); ++i) {
    if (i) envs_text << "\n";
    envs_text << rng_to_string(env_rngs_[i]);
  }
  f.add_str("rng/env", envs_text.str());
  return f;
}

void Trainer::save(const std::string& path) {
  quantize_params();
  // env runtime state is only compact at a reset boundary, so a mid-episode
  // save advances every env to a fresh episode first; a freshly loaded or
  // just-saved trainer is captured as-is, which makes save idempotent
  bool fresh = true;
  for (const auto& env : envs_)
    if (env.steps != 0) fresh = false;
  if (!fresh) reset_all_envs();
  write_checkpoint_file(path, to_file());
}

void Trainer::restore(const CheckpointFile& f) {
  iteration_ = f.i64_scalar("iteration");
  has_flat_ = f.i64_scalar("has_flat_actor") != 0;
  set_net_params(policy_.actor, f.f32("net/actor"), "actor");
  const Vec ls = f.f32("net/log_std");
  if (ls.size() != policy_.log_std.size()) throw IoError("log_std size mismatch");
  policy_.log_std = ls;
  set_net_params(critic_task_, f.f32("net/critic_task"), "critic_task");
  set_net_params(critic_imit_, f.f32("net/critic_imit"), "critic_imit");
  set_net_params(ece_.encoder, f.f32("net/encoder"), "encoder");
  set_net_params(ece_.decoder, f.f32("net/decoder"), "decoder");
  set_net_params(ece_.prior, f.f32("net/prior"), "prior");
  set_net_params(disc_.net, f.f32("net/disc"), "disc");
  if (has_flat_) {
    flat_actor_ = policy_.actor;
    set_net_params(flat_actor_, f.f32("net/flat_actor"), "flat_actor");
  }
  read_adam(f, "adam/actor", ppo_opt_.actor);
  read_adam_vec(f, "adam/log_std", ppo_opt_.log_std);
  read_adam(f, "adam/critic_task", ppo_opt_.critic_task);
  read_adam(f, "adam/critic_imit", ppo_opt_.critic_imit);
  read_adam(f, "adam/encoder", ece_opt_.encoder);
  read_adam(f, "adam/decoder", ece_opt_.decoder);
  read_adam(f, "adam/prior", ece_opt_.prior);
  read_adam(f, "adam/disc", disc_.adam);
  const Vec mean = f.f64("stats/mean");
  const Vec m2 = f.f64("stats/m2");
  if (mean.size() != dims_.frame || m2.size() != dims_.frame)
    throw IoError("frame statistics size mismatch");
  stats_.restore(mean, m2, f.f64_scalar("stats/count"), f.i64_scalar("stats/frozen") != 0);
  const Vec best = f.f64("premium/best");
  const std::vector<std::int64_t> counts = f.i64("premium/counts");
  if (best.size() != skills_.count() || counts.size() != static_cast<size_t>(skills_.count()))
    throw IoError("premium buffer shape mismatch");
  for (int s = 0; s < skills_.count(); ++s) {
    std::vector<std::vector<ImitationFrame>> trajs;
    for (std::int64_t j = 0; j < counts[static_cast<size_t>(s)]; ++j) {
      char name[64];
      std::snprintf(name, sizeof(name), "premium/s%d/t%d", s, static_cast<int>(j));
      const Mat m = f.f64_mat(name);
      if (m.rows() != dims_.frame) throw IoError("premium trajectory frame size mismatch");
      std::vector<ImitationFrame> traj;
      traj.reserve(static_cast<size_t>(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        traj.push_back(ImitationFrame::from_vec(m.col(c), skills_.count()));
      trajs.push_back(std::move(traj));
    }
    premium_.restore_skill(s, std::move(trajs), best(s));
  }
  const std::vector<std::int64_t> window = f.i64("sampler/window");
  std::vector<int> w;
  w.reserve(window.size());
  for (std::int64_t v : window) w.push_back(static_cast<int>(v));
  sampler_.restore_window(w);
  ece_best_ = f.f64_scalar("ece/best");
  const std::vector<std::int64_t> tt = f.i64("env/terrain_type");
  const std::vector<std::int64_t> lv = f.i64("env/level");
  if (tt.size() != static_cast<size_t>(cfg_.num_envs) ||
      lv.size() != static_cast<size_t>(cfg_.num_envs))
    throw IoError("per-env terrain arrays do not match num_envs");
  const Mat env_state = f.f64_mat("env/state");
  const Mat env_dr = f.f64_mat("env/dr");
  const std::vector<std::int64_t> env_skill = f.i64("env/skill");
  const Vec env_cmd = f.f64("env/command");
  if (env_state.rows() != 14 || env_state.cols() != cfg_.num_envs || env_dr.rows() != 8 ||
      env_dr.cols() != cfg_.num_envs || env_skill.size() != static_cast<size_t>(cfg_.num_envs) ||
      env_cmd.size() != cfg_.num_envs)
    throw IoError("per-env state arrays do not match num_envs");
  for (int i = 0; i < cfg_.num_envs; ++i) {
    const std::int64_t t = tt[static_cast<size_t>(i)];
    if (t < 0 || t > 4) throw IoError("invalid terrain type in checkpoint");
    set_env_terrain(i, static_cast<TerrainType>(t), static_cast<int>(lv[static_cast<size_t>(i)]));
    EnvRunner& env = envs_[static_cast<size_t>(i)];
    const std::int64_t skill = env_skill[static_cast<size_t>(i)];
    if (skill < 0 || skill >= skills_.count()) throw IoError("invalid skill index in checkpoint");
    env.skill = static_cast<int>(skill);
    env.command.target_vx = env_cmd(i);
    DomainRandomization dr;
    dr.friction_coeff = env_dr(0, i);
    dr.payload_kg = env_dr(1, i);
    dr.com_shift = env_dr(2, i);
    dr.push_velocity = env_dr(3, i);
    dr.push_interval_s = env_dr(4, i);
    dr.actuation_delay_s = env_dr(5, i);
    dr.pd_stiffness_mult = env_dr(6, i);
    dr.pd_damping_mult = env_dr(7, i);
    env.sim.set_randomization(dr);
    RobotState s;
    s.base_x = env_state(0, i);
    s.base_z = env_state(1, i);
    s.pitch = env_state(2, i);
    s.base_vx = env_state(3, i);
    s.base_vz = env_state(4, i);
    s.pitch_rate = env_state(5, i);
    s.joint_pos = env_state.col(i).segment(6, 4);
    s.joint_vel = env_state.col(i).segment(10, 4);
    env.sim.reset(s);
    rebuild_env_derived(i);
  }
  rng_from_string(train_rng_, f.str("rng/train"));
  rng_from_string(scheduler_rng_, f.str("rng/scheduler"));
  std::istringstream env_text(f.str("rng/env"));
  std::string line;
  size_t i = 0;
  while (std::getline(env_text, line)) {
    if (i >= env_rngs_.size()) throw IoError("too many env rng states in checkpoint");
    rng_from_string(env_rngs_[i], line);
    i += 1;
  }
  if (i != env_rngs_.size()) throw IoError("missing env rng states in checkpoint");
}

Trainer Trainer::from_file(const CheckpointFile& f) {
  const TrainConfig cfg = parse_config(f.str("config"));
  SkillSet skills = parse_keyframes(f.str("skills"));
  Trainer t(cfg, std::move(skills));
  t.restore(f);
  return t;
}

Trainer Trainer::load(const std::string& path) { return from_file(read_checkpoint_file(path)); }

EvalReport Trainer::evaluate(int skill, TerrainType terrain, int level, int episodes) const {
  return evaluate(skill, terrain, level, episodes, cfg_.eval_vx);
}

EvalReport Trainer::evaluate(int skill, TerrainType terrain, int level, int episodes,
                             double vx) const {
  if (skill < 0 || skill >= skills_.count()) throw InvalidArgument("skill index out of range");
  if (episodes < 1) throw InvalidArgument("episodes must be positive");
  if (level < 0 || level > 9) throw InvalidArgument("terrain level must be in [0, 9]");
  const int n = skills_.count();
  const Keyframe& k = skills_.keyframes[static_cast<size_t>(skill)];
  const std::vector<ImitationFrame> ref_frames = keyframe_trajectory(k, kEvalSteps, n);
  const std::vector<Vec> ref_raw = frames_to_vecs(ref_frames);
  const std::vector<Vec> ref_norm = normalize_frames(ref_frames, stats_);
  EvalReport report;
  report.skill = skill;
  report.episodes = episodes;
  double sum_h = 0.0, sum_p = 0.0, sum_dtw = 0.0, sum_cos = 0.0, successes = 0.0;
  for (int e = 0; e < episodes; ++e) {
    EnvSim sim(generate_terrain(terrain, level, terrain_seed(100000 + e, terrain, level)));
    Rng rng(splitmix64(splitmix64(cfg_.seed ^ 0x4556414cull) ^ static_cast<std::uint64_t>(e)));
    const InitNoise noise{cfg_.init_joint_noise, cfg_.init_height_noise, cfg_.init_pitch_noise_deg,
                          0.0};
    const RobotState s0 = sample_initial_state(skills_, skill, sim.terrain(), 0.0, rng, noise);
    sim.reset(s0);
    const Command cmd{vx};
    const Vec oh = onehot(skill, n);
    ObsHistory hist(cfg_.history_frames, dims_.prop);
    ObservationBundle cur = observe(s0, cmd, oh, sim.terrain(), Eigen::Vector4d::Zero(),
                                    k.joint_pos);
    hist.reset(cur.prop);
    std::vector<ImitationFrame> frames;
    frames.reserve(kEvalSteps);
    bool collided = false;
    for (int step = 0; step < kEvalSteps; ++step) {
      const EceOutput ctx = ece_forward(ece_, hist.flat(), oh, nullptr);
      Vec aobs(dims_.actor_in);
      aobs.head(dims_.prop) = cur.prop;
      aobs.tail(dims_.z) = ctx.z;
      const Vec a = policy_.actor.forward(aobs);
      const Eigen::Vector4d a4 = a;
      const StepResult sr = sim.step(k.joint_pos + cfg_.action_scale * a4);
      if (sr.diverged || !sr.state.finite()) {
        collided = true;
        break;
      }
      cur = observe(sr.state, cmd, oh, sim.terrain(), a4, k.joint_pos);
      hist.push(cur.prop);
      frames.push_back(cur.frame);
      if (sr.collision) {
        collided = true;
        break;
      }
    }
    if (frames.empty()) frames.push_back(cur.frame);
    const size_t start = frames.size() > 20 ? 20 : 0;
    double eh = 0.0, ep = 0.0;
    for (size_t t = start; t < frames.size(); ++t) {
      eh += frames[t].base_height;
      ep += frames[t].pitch;
    }
    const double steps_counted = static_cast<double>(frames.size() - start);
    sum_h += eh / steps_counted;
    sum_p += ep / steps_counted;
    sum_dtw += dtw_distance(normalize_frames(frames, stats_), ref_norm);
    sum_cos += mean_cosine(frames_to_vecs(frames), ref_raw);
    const double commanded = vx * kEvalSteps * kControlDt;
    bool success = !collided;
    if (std::abs(commanded) > 1e-9) {
      const double progress = (sim.state().base_x - s0.base_x) / commanded;
      success = success && progress >= 0.8;
    }
    if (success) successes += 1.0;
  }
  report.mean_base_height = sum_h / episodes;
  report.mean_pitch_deg = (sum_p / episodes) * 180.0 / std::numbers::pi;
  report.dtw = sum_dtw / episodes;
  report.cosine = sum_cos / episodes;
  report.success_rate = successes / episodes;
  return report;
}

std::string Trainer::replay(const std::vector<ScriptEntry>& script) const {
  if (script.empty()) throw InvalidArgument("empty replay script");
  for (const auto& e : script)
    if (e.skill < 0 || e.skill >= skills_.count())
      throw InvalidArgument("script skill index " + std::to_string(e.skill) + " out of range");
  const int n = skills_.count();
  const double duration = script.back().time + 3.0;
  const int steps = static_cast<int>(duration / kControlDt + 0.5);
  EnvSim sim(generate_terrain(TerrainType::Flat, 0, 0));
  int skill = script.front().skill;
  Command cmd{script.front().target_vx};
  Eigen::Vector4d defaults = skills_.keyframes[static_cast<size_t>(skill)].joint_pos;
  const RobotState s0 = keyframe_pose_state(skills_.keyframes[static_cast<size_t>(skill)]);
  sim.reset(s0);
  ObsHistory hist(cfg_.history_frames, dims_.prop);
  ObservationBundle cur = observe(s0, cmd, onehot(skill, n), sim.terrain(),
                                  Eigen::Vector4d::Zero(), defaults);
  hist.reset(cur.prop);
  Eigen::Vector4d prev_a = Eigen::Vector4d::Zero();
  Eigen::Vector4d prev_torques = Eigen::Vector4d::Zero();
  size_t next_entry = 0;
  std::ostringstream os;
  os << "time,base_height,pitch,q0,q1,q2,q3,skill,command_vx,r_T,r_R,r_res,r_SI,r_c\n";
  for (int h = 0; h < steps; ++h) {
    const double t = h * kControlDt;
    while (next_entry < script.size() && script[next_entry].time <= t + 1e-9) {
      skill = script[next_entry].skill;
      cmd.target_vx = script[next_entry].target_vx;
      defaults = skills_.keyframes[static_cast<size_t>(skill)].joint_pos;
      next_entry += 1;
    }
    const Vec oh = onehot(skill, n);
    cur = observe(sim.state(), cmd, oh, sim.terrain(), prev_a, defaults);
    const EceOutput ctx = ece_forward(ece_, hist.flat(), oh, nullptr);
    Vec aobs(dims_.actor_in);
    aobs.head(dims_.prop) = cur.prop;
    aobs.tail(dims_.z) = ctx.z;
    const Vec a = policy_.actor.forward(aobs);
    const Eigen::Vector4d a4 = a;
    const Eigen::Vector4d pre_qd = sim.state().joint_vel;
    const StepResult sr = sim.step(defaults + cfg_.action_scale * a4);
    if (sr.diverged || !sr.state.finite()) throw NumericalError("simulation diverged in replay");
    const ObservationBundle post = observe(sr.state, cmd, oh, sim.terrain(), a4, defaults);
    RewardInputs in;
    in.state = sr.state;
    in.prev_joint_vel = pre_qd;
    in.action = a;
    in.prev_action = prev_a;
    in.applied_torques = sr.torques;
    in.prev_torques = prev_torques;
    in.foot_contact = sr.foot_contact;
    in.normal_force = sr.normal_force;
    in.foot_vx = {sr.foot_vel[0].x, sr.foot_vel[1].x};
    in.command_vx = cmd.target_vx;
    in.default_joint_pos = defaults;
    in.control_dt = kControlDt;
    double res_term = 0.0;
    if (has_flat_) {
      const Vec a_flat = flat_actor_.forward(aobs);
      res_term = residual_reward(a, a_flat, iteration_, cfg_.t1, cfg_.t2);
    }
    const double sil_term = sil_reward(disc_.net, stats_.normalize(cur.frame.to_vec()),
                                       stats_.normalize(post.frame.to_vec()));
    const RewardBreakdown bd = compute_rewards(in, sr.collision, res_term, sil_term,
                                               RewardWeights{cfg_.w_term, cfg_.w_reg, cfg_.w_res,
                                                             cfg_.w_sil});
    char tbuf[32];
    std::snprintf(tbuf, sizeof(tbuf), "%.6g", t);
    os << tbuf << "," << fmt(sr.state.base_z - sim.terrain().height(sr.state.base_x)) << ","
       << fmt(sr.state.pitch);
    for (int j = 0; j < 4; ++j) os << "," << fmt(sr.state.joint_pos(j));
    os << "," << skill << "," << fmt(cmd.target_vx) << "," << fmt(bd.r_T) << "," << fmt(bd.r_R)
       << "," << fmt(bd.r_res) << "," << fmt(bd.r_SI) << "," << fmt(bd.r_c) << "\n";
    hist.push(post.prop);
    prev_a = a4;
    prev_torques = sr.torques;
  }
  return os.str();
}

void Trainer::add_skill(const Keyframe& keyframe, const std::string& name, std::int64_t new_t1,
                        std::int64_t new_t2) {
  if (new_t1 < 1)
    throw InvalidArgument("t1 must be at least 1 after adding a skill (it must relearn with the "
                          "imitation channel active)");
  if (new_t1 >= new_t2) throw InvalidArgument("t1 must be smaller than t2");
  for (const auto& existing : skills_.names)
    if (existing == name) throw InvalidArgument("duplicate skill name '" + name + "'");
  const int n = skills_.count();
  Keyframe k = keyframe;
  k.skill_index = n;

  // new one-hot slot sits after the existing ones in every layout
  policy_.actor.insert_input_column(2 + n);
  widen_adam_input(ppo_opt_.actor, 2 + n);
  critic_task_.insert_input_column(2 + n);
  widen_adam_input(ppo_opt_.critic_task, 2 + n);
  critic_imit_.insert_input_column(2 + n);
  widen_adam_input(ppo_opt_.critic_imit, 2 + n);
  disc_.net.insert_input_column(7 + 2 * n);  // second frame first, offsets stay valid
  widen_adam_input(disc_.adam, 7 + 2 * n);
  disc_.net.insert_input_column(1 + n);
  widen_adam_input(disc_.adam, 1 + n);
  const int prop_old = dims_.prop;
  for (int fidx = cfg_.history_frames - 1; fidx >= 0; --fidx) {
    const int at = fidx * prop_old + 2 + n;
    ece_.encoder.insert_input_column(at);
    widen_adam_input(ece_opt_.encoder, at);
  }
  ece_.decoder.insert_input_column(cfg_.lat_dim + n);
  widen_adam_input(ece_opt_.decoder, cfg_.lat_dim + n);
  ece_.decoder.insert_output_row(2 + n);
  widen_adam_output(ece_opt_.decoder, 2 + n);
  ece_.prior.insert_input_column(n);
  widen_adam_input(ece_opt_.prior, n);
  ece_.n_skills += 1;
  ece_.prop += 1;

  stats_.insert_dim(1 + n);
  premium_.widen_onehot(n);
  premium_.append_skill(k, n + 1);
  sampler_.append_skill();
  skills_.keyframes.push_back(k);
  skills_.names.push_back(name);

  flat_actor_ = DenseNet();
  has_flat_ = false;
  cfg_.t1 = new_t1;
  cfg_.t2 = new_t2;
  dims_ = network_dims(cfg_, skills_.count());
  iteration_ = 0;
  ece_best_ = 0.0;
  for (int i = 0; i < cfg_.num_envs; ++i) set_env_terrain(i, TerrainType::Flat, 0);
  reset_all_envs();
}

}  // namespace kiras
