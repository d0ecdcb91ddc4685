#include "kiras/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

#include "kiras/observation.hpp"

namespace kiras {
namespace {

template <typename T>
void read_key(const YAML::Node& node, const char* key, T* out) {
  const YAML::Node v = node[key];
  if (!v) return;
  try {
    *out = v.as<T>();
  } catch (const YAML::Exception&) {
    throw InvalidArgument(std::string("config key '") + key + "' has the wrong type");
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "preset",          "seed",
      "t1",              "t2",
      "num_envs",        "horizon",
      "keyframe_file",   "out_dir",
      "terrain_types",   "episode_steps",
      "command_min",     "command_max",
      "action_scale",    "eval_vx",
      "gamma",           "gae_lambda",
      "clip",            "epochs",
      "minibatches",     "entropy_coef",
      "grad_clip",       "learning_rate",
      "log_std_init",    "sigma",
      "w_term",          "w_reg",
      "w_res",           "w_sil",
      "lambda_dtw",      "eq1_verbatim_sign",
      "premium_capacity", "disc_batch",
      "beta",            "history_frames",
      "v_dim",           "lat_dim",
      "window_size",     "init_joint_noise",
      "init_height_noise", "init_pitch_noise_deg",
      "cross_skill_prob", "actor_hidden",
      "critic_hidden",   "enc_hidden",
      "dec_hidden",      "disc_hidden",
      "checkpoint_interval"};
  return keys;
}

void apply_overrides(TrainConfig& c, const YAML::Node& node) {
  read_key(node, "seed", &c.seed);
  read_key(node, "t1", &c.t1);
  read_key(node, "t2", &c.t2);
  read_key(node, "num_envs", &c.num_envs);
  read_key(node, "horizon", &c.horizon);
  read_key(node, "keyframe_file", &c.keyframe_file);
  read_key(node, "out_dir", &c.out_dir);
  read_key(node, "terrain_types", &c.terrain_types);
  read_key(node, "episode_steps", &c.episode_steps);
  read_key(node, "command_min", &c.command_min);
  read_key(node, "command_max", &c.command_max);
  read_key(node, "action_scale", &c.action_scale);
  read_key(node, "eval_vx", &c.eval_vx);
  read_key(node, "gamma", &c.gamma);
  read_key(node, "gae_lambda", &c.gae_lambda);
  read_key(node, "clip", &c.clip);
  read_key(node, "epochs", &c.epochs);
  read_key(node, "minibatches", &c.minibatches);
  read_key(node, "entropy_coef", &c.entropy_coef);
  read_key(node, "grad_clip", &c.grad_clip);
  read_key(node, "learning_rate", &c.learning_rate);
  read_key(node, "log_std_init", &c.log_std_init);
  read_key(node, "sigma", &c.sigma);
  read_key(node, "w_term", &c.w_term);
  read_key(node, "w_reg", &c.w_reg);
  read_key(node, "w_res", &c.w_res);
  read_key(node, "w_sil", &c.w_sil);
  read_key(node, "lambda_dtw", &c.lambda_dtw);
  read_key(node, "eq1_verbatim_sign", &c.eq1_verbatim_sign);
  read_key(node, "premium_capacity", &c.premium_capacity);
  read_key(node, "disc_batch", &c.disc_batch);
  read_key(node, "beta", &c.beta);
  read_key(node, "history_frames", &c.history_frames);
  read_key(node, "v_dim", &c.v_dim);
  read_key(node, "lat_dim", &c.lat_dim);
  read_key(node, "window_size", &c.window_size);
  read_key(node, "init_joint_noise", &c.init_joint_noise);
  read_key(node, "init_height_noise", &c.init_height_noise);
  read_key(node, "init_pitch_noise_deg", &c.init_pitch_noise_deg);
  read_key(node, "cross_skill_prob", &c.cross_skill_prob);
  read_key(node, "actor_hidden", &c.actor_hidden);
  read_key(node, "critic_hidden", &c.critic_hidden);
  read_key(node, "enc_hidden", &c.enc_hidden);
  read_key(node, "dec_hidden", &c.dec_hidden);
  read_key(node, "disc_hidden", &c.disc_hidden);
  read_key(node, "checkpoint_interval", &c.checkpoint_interval);
}

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << "]";
  return os.str();
}

std::string join_strings(const std::vector<std::string>& v) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << "]";
  return os.str();
}

void require(bool ok, const char* msg) {
  if (!ok) throw InvalidArgument(msg);
}

}  // namespace

TrainConfig preset_config(const std::string& name) {
  TrainConfig c;
  if (name == "desk") return c;
  if (name == "solo8-dims") {
    // published full-scale setup, kept verbatim for dimension audits
    c.preset = "solo8-dims";
    c.t1 = 6000;
    c.t2 = 30000;
    c.num_envs = 4096;
    c.v_dim = 3;
    c.lat_dim = 8;
    c.actor_hidden = {128, 128, 128};
    c.critic_hidden = {128, 128, 128};
    c.enc_hidden = {128, 64};
    c.dec_hidden = {64, 128};
    c.disc_hidden = {512, 256};
    return c;
  }
  throw InvalidArgument("unknown preset '" + name + "' (expected desk or solo8-dims)");
}

TrainConfig parse_config(const std::string& yaml_text) {
  YAML::Node node;
  try {
    node = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw InvalidArgument(std::string("config parse error: ") + e.what());
  }
  if (node.IsNull() || !node.IsDefined()) node = YAML::Node(YAML::NodeType::Map);
  if (!node.IsMap()) throw InvalidArgument("config must be a key/value map");

  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (known_keys().count(key) == 0)
      throw InvalidArgument("unknown config key '" + key + "'");
  }

  std::string preset = "desk";
  read_key(node, "preset", &preset);
  TrainConfig c = preset_config(preset);
  apply_overrides(c, node);
  validate_config(c);
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_yaml(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "preset: " << c.preset << "\n";
  os << "seed: " << c.seed << "\n";
  os << "t1: " << c.t1 << "\n";
  os << "t2: " << c.t2 << "\n";
  os << "num_envs: " << c.num_envs << "\n";
  os << "horizon: " << c.horizon << "\n";
  os << "keyframe_file: \"" << c.keyframe_file << "\"\n";
  os << "out_dir: \"" << c.out_dir << "\"\n";
  os << "terrain_types: " << join_strings(c.terrain_types) << "\n";
  os << "episode_steps: " << c.episode_steps << "\n";
  os << "command_min: " << c.command_min << "\n";
  os << "command_max: " << c.command_max << "\n";
  os << "action_scale: " << c.action_scale << "\n";
  os << "eval_vx: " << c.eval_vx << "\n";
  os << "gamma: " << c.gamma << "\n";
  os << "gae_lambda: " << c.gae_lambda << "\n";
  os << "clip: " << c.clip << "\n";
  os << "epochs: " << c.epochs << "\n";
  os << "minibatches: " << c.minibatches << "\n";
  os << "entropy_coef: " << c.entropy_coef << "\n";
  os << "grad_clip: " << c.grad_clip << "\n";
  os << "learning_rate: " << c.learning_rate << "\n";
  os << "log_std_init: " << c.log_std_init << "\n";
  os << "sigma: " << c.sigma << "\n";
  os << "w_term: " << c.w_term << "\n";
  os << "w_reg: " << c.w_reg << "\n";
  os << "w_res: " << c.w_res << "\n";
  os << "w_sil: " << c.w_sil << "\n";
  os << "lambda_dtw: " << c.lambda_dtw << "\n";
  os << "eq1_verbatim_sign: " << (c.eq1_verbatim_sign ? "true" : "false") << "\n";
  os << "premium_capacity: " << c.premium_capacity << "\n";
  os << "disc_batch: " << c.disc_batch << "\n";
  os << "beta: " << c.beta << "\n";
  os << "history_frames: " << c.history_frames << "\n";
  os << "v_dim: " << c.v_dim << "\n";
  os << "lat_dim: " << c.lat_dim << "\n";
  os << "window_size: " << c.window_size << "\n";
  os << "init_joint_noise: " << c.init_joint_noise << "\n";
  os << "init_height_noise: " << c.init_height_noise << "\n";
  os << "init_pitch_noise_deg: " << c.init_pitch_noise_deg << "\n";
  os << "cross_skill_prob: " << c.cross_skill_prob << "\n";
  os << "actor_hidden: " << join_ints(c.actor_hidden) << "\n";
  os << "critic_hidden: " << join_ints(c.critic_hidden) << "\n";
  os << "enc_hidden: " << join_ints(c.enc_hidden) << "\n";
  os << "dec_hidden: " << join_ints(c.dec_hidden) << "\n";
  os << "disc_hidden: " << join_ints(c.disc_hidden) << "\n";
  os << "checkpoint_interval: " << c.checkpoint_interval << "\n";
  return os.str();
}

void validate_config(const TrainConfig& c) {
  require(c.preset == "desk" || c.preset == "solo8-dims", "preset must be desk or solo8-dims");
  require(c.t1 >= 1, "t1 must be at least 1");
  require(c.t1 < c.t2, "t1 must be smaller than t2");
  require(c.num_envs >= 1, "num_envs must be positive");
  require(c.horizon >= 2, "horizon must be at least 2");
  require(c.episode_steps >= 2, "episode_steps must be at least 2");
  require(static_cast<std::int64_t>(c.num_envs) * c.horizon >= c.minibatches,
          "rollout batch smaller than minibatch count");
  require(c.command_min <= c.command_max, "command_min must not exceed command_max");
  require(c.action_scale > 0.0, "action_scale must be positive");
  require(c.gamma > 0.0 && c.gamma <= 1.0, "gamma must be in (0, 1]");
  require(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0, "gae_lambda must be in [0, 1]");
  require(c.clip > 0.0, "clip must be positive");
  require(c.epochs >= 1, "epochs must be positive");
  require(c.minibatches >= 1, "minibatches must be positive");
  require(c.entropy_coef >= 0.0, "entropy_coef must be non-negative");
  require(c.grad_clip > 0.0, "grad_clip must be positive");
  require(c.learning_rate > 0.0, "learning_rate must be positive");
  require(c.sigma >= 0.0 && c.sigma <= 1.0, "sigma must be in [0, 1]");
  require(c.lambda_dtw >= 0.0, "lambda_dtw must be non-negative");
  require(c.premium_capacity >= 1, "premium_capacity must be positive");
  require(c.disc_batch >= 1, "disc_batch must be positive");
  require(c.beta >= 0.0, "beta must be non-negative");
  require(c.history_frames >= 1, "history_frames must be positive");
  require(c.v_dim >= 1, "v_dim must be positive");
  require(c.lat_dim >= 1, "lat_dim must be positive");
  require(c.window_size >= 1, "window_size must be positive");
  require(c.init_joint_noise >= 0.0, "init_joint_noise must be non-negative");
  require(c.init_height_noise >= 0.0, "init_height_noise must be non-negative");
  require(c.init_pitch_noise_deg >= 0.0, "init_pitch_noise_deg must be non-negative");
  require(c.cross_skill_prob >= 0.0 && c.cross_skill_prob <= 1.0,
          "cross_skill_prob must be in [0, 1]");
  require(c.checkpoint_interval >= 1, "checkpoint_interval must be positive");
  require(!c.terrain_types.empty(), "terrain_types must not be empty");
  for (const auto& t : c.terrain_types) terrain_type_from_string(t);
  const std::vector<const std::vector<int>*> hidden = {
      &c.actor_hidden, &c.critic_hidden, &c.enc_hidden, &c.dec_hidden, &c.disc_hidden};
  for (const auto* h : hidden) {
    require(!h->empty(), "hidden layer lists must not be empty");
    for (int width : *h) require(width >= 1, "hidden layer widths must be positive");
  }
}

std::vector<TerrainType> terrain_mix(const TrainConfig& c) {
  std::vector<TerrainType> mix;
  mix.reserve(c.terrain_types.size());
  for (const auto& name : c.terrain_types) mix.push_back(terrain_type_from_string(name));
  return mix;
}

NetworkDims network_dims(const TrainConfig& c, int n_skills) {
  if (n_skills < 1) throw InvalidArgument("skill count must be positive");
  NetworkDims d;
  d.n_skills = n_skills;
  if (c.preset == "solo8-dims") {
    // the published table is fixed at 5 skills and a 31-dim frame
    if (n_skills != 5) throw InvalidArgument("solo8-dims preset is defined for exactly 5 skills");
    d.prop = 31;
    d.privileged = 107;
    d.frame = 19;
    d.actor_out = 8;
  } else {
    d.prop = prop_dim(n_skills);
    d.privileged = privileged_dim(n_skills);
    d.frame = frame_dim(n_skills);
    d.actor_out = 4;
  }
  d.z = c.v_dim + c.lat_dim;
  d.actor_in = d.prop + d.z;
  d.critic_in = d.privileged;
  d.enc_in = c.history_frames * d.prop;
  d.enc_out = c.v_dim + 2 * c.lat_dim;
  d.dec_in = c.lat_dim + n_skills;
  d.dec_out = d.prop;
  d.disc_in = 2 * d.frame;
  return d;
}

}  // namespace kiras
