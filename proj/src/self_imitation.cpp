#include "kiras/self_imitation.hpp"

#include <cstdio>

namespace kiras {

double dtw_distance(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  if (a.empty() || b.empty()) throw InvalidArgument("dtw needs non-empty sequences");
  const Eigen::Index dim = a.front().size();
  for (const auto& v : a)
    if (v.size() != dim) throw InvalidArgument("dtw frame dims differ");
  for (const auto& v : b)
    if (v.size() != dim) throw InvalidArgument("dtw frame dims differ");

  const size_t n = a.size(), m = b.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (size_t j = 1; j <= m; ++j) {
      const double cost = (a[i - 1] - b[j - 1]).norm();
      cur[j] = cost + std::min(prev[j - 1], std::min(prev[j], cur[j - 1]));
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

std::vector<Vec> frames_to_vecs(const std::vector<ImitationFrame>& frames) {
  std::vector<Vec> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.to_vec());
  return out;
}

std::vector<Vec> normalize_frames(const std::vector<ImitationFrame>& frames,
                                  const RunningStat& stats) {
  std::vector<Vec> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(stats.normalize(f.to_vec()));
  return out;
}

double score_trajectory(const std::vector<Vec>& traj, const std::vector<Vec>& keyframe_traj,
                        const std::vector<double>& rewards, double lambda_dtw,
                        bool verbatim_sign) {
  if (rewards.size() != traj.size())
    throw InvalidArgument("reward sequence length must match the trajectory");
  double sum = 0.0;
  for (double r : rewards) sum += r;
  const double d = dtw_distance(traj, keyframe_traj);
  return verbatim_sign ? sum + lambda_dtw * d : sum - lambda_dtw * d;
}

PremiumBuffer::PremiumBuffer(const SkillSet& skills, int trajectory_len, int capacity)
    : trajectory_len_(trajectory_len), capacity_(capacity) {
  if (trajectory_len < 2) throw InvalidArgument("trajectory length must be at least 2");
  if (capacity < 1) throw InvalidArgument("buffer capacity must be positive");
  per_skill_.resize(static_cast<size_t>(skills.count()));
  for (int i = 0; i < skills.count(); ++i)
    per_skill_[static_cast<size_t>(i)].trajs.push_back(
        keyframe_trajectory(skills.keyframes[static_cast<size_t>(i)], trajectory_len, skills.count()));
}

bool PremiumBuffer::maybe_admit(int skill, std::vector<ImitationFrame> traj, double score) {
  if (skill < 0 || skill >= skill_count()) throw InvalidArgument("skill index out of range");
  if (static_cast<int>(traj.size()) != trajectory_len_)
    throw InvalidArgument("trajectory length mismatch");
  Entry& e = per_skill_[static_cast<size_t>(skill)];
  if (!(score > e.best)) return false;
  e.best = score;
  e.trajs.push_back(std::move(traj));
  if (static_cast<int>(e.trajs.size()) > capacity_) e.trajs.erase(e.trajs.begin() + 1);
  return true;
}

std::pair<const ImitationFrame*, const ImitationFrame*> PremiumBuffer::sample_pair(
    int skill, Rng& rng) const {
  const Entry& e = per_skill_.at(static_cast<size_t>(skill));
  std::uniform_int_distribution<size_t> pick_traj(0, e.trajs.size() - 1);
  const auto& traj = e.trajs[pick_traj(rng)];
  std::uniform_int_distribution<size_t> pick_t(0, traj.size() - 2);
  const size_t t = pick_t(rng);
  return {&traj[t], &traj[t + 1]};
}

void PremiumBuffer::append_skill(const Keyframe& k, int n_skills_after) {
  Entry e;
  e.trajs.push_back(keyframe_trajectory(k, trajectory_len_, n_skills_after));
  per_skill_.push_back(std::move(e));
}

void PremiumBuffer::widen_onehot(int new_index) {
  for (auto& entry : per_skill_)
    for (auto& traj : entry.trajs)
      for (auto& f : traj) f.skill_onehot = RunningStat::inserted(f.skill_onehot, new_index, 0.0);
}

void PremiumBuffer::restore_skill(int skill, std::vector<std::vector<ImitationFrame>> trajs,
                                  double best) {
  if (skill < 0 || skill >= skill_count()) throw InvalidArgument("skill index out of range");
  Entry& e = per_skill_[static_cast<size_t>(skill)];
  e.trajs.assign(std::make_move_iterator(trajs.begin()), std::make_move_iterator(trajs.end()));
  e.best = best;
}

Discriminator::Discriminator(int input_frame_dim, const std::vector<int>& hidden, double lr) {
  std::vector<int> dims;
  dims.push_back(2 * input_frame_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  net = DenseNet(dims);
  adam = AdamState::for_net(net, lr);
}

double ls_gan_loss(const DenseNet& net, const Mat& real_pairs, const Mat& fake_pairs) {
  const Mat dr = net.forward(real_pairs);
  const Mat df = net.forward(fake_pairs);
  const double lr_ = (dr.array() - 1.0).square().mean();
  const double lf = (df.array() + 1.0).square().mean();
  return lr_ + lf;
}

NetGrads ls_gan_grads(const DenseNet& net, const Mat& real_pairs, const Mat& fake_pairs,
                      double* loss) {
  if (real_pairs.cols() == 0 || fake_pairs.cols() == 0)
    throw InvalidArgument("discriminator batches must be non-empty");
  auto real_cache = net.forward_cached(real_pairs);
  auto fake_cache = net.forward_cached(fake_pairs);
  const Mat& dr = real_cache.output();
  const Mat& df = fake_cache.output();
  if (loss != nullptr)
    *loss = (dr.array() - 1.0).square().mean() + (df.array() + 1.0).square().mean();

  const double nr = static_cast<double>(dr.cols());
  const double nf = static_cast<double>(df.cols());
  const Mat up_real = 2.0 * (dr.array() - 1.0).matrix() / nr;
  const Mat up_fake = 2.0 * (df.array() + 1.0).matrix() / nf;
  NetGrads gr = net.backward(real_cache, up_real);
  NetGrads gf = net.backward(fake_cache, up_fake);
  for (size_t l = 0; l < gr.w.size(); ++l) {
    gr.w[l] += gf.w[l];
    gr.b[l] += gf.b[l];
  }
  return gr;
}

double discriminator_update(Discriminator& d, const Mat& real_pairs, const Mat& fake_pairs) {
  double loss = 0.0;
  NetGrads g = ls_gan_grads(d.net, real_pairs, fake_pairs, &loss);
  if (!g.all_finite()) throw NumericalError("non-finite discriminator gradient");
  adam_step(d.net, g, d.adam);
  return loss;
}

double sil_reward_from_score(double score) {
  return std::max(1.0 - 0.25 * (score - 1.0) * (score - 1.0), 0.0);
}

double sil_reward(const DenseNet& net, const Vec& phi_prev, const Vec& phi_cur) {
  Vec in(phi_prev.size() + phi_cur.size());
  in << phi_prev, phi_cur;
  return sil_reward_from_score(net.forward(in)(0));
}

std::string premium_to_csv(const PremiumBuffer& buffer, int skill) {
  if (skill < 0 || skill >= buffer.skill_count())
    throw InvalidArgument("skill index out of range");
  std::ostringstream os;
  const int n = static_cast<int>(buffer.keyframe_trajectory_of(skill).front().skill_onehot.size());
  os << "trajectory,frame,pitch";
  for (int s = 0; s < n; ++s) os << ",onehot_" << s;
  os << ",q0,q1,q2,q3,base_height\n";
  char buf[40];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << "," << buf;
  };
  for (int j = 0; j < buffer.trajectory_count(skill); ++j) {
    const auto& traj = buffer.trajectory(skill, j);
    for (size_t t = 0; t < traj.size(); ++t) {
      const ImitationFrame& f = traj[t];
      os << j << "," << t;
      put(f.pitch);
      for (int s = 0; s < n; ++s) put(f.skill_onehot(s));
      for (int q = 0; q < 4; ++q) put(f.joint_pos(q));
      put(f.base_height);
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace kiras
