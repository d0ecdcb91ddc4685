#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kiras/common.hpp"
#include "kiras/terrain.hpp"

namespace kiras {

// Flat key set, every field has a default so an empty config file is valid.
// `preset` is applied first, explicit keys override it.
struct TrainConfig {
  std::string preset = "desk";
  std::uint64_t seed = 1;
  std::int64_t t1 = 2000;
  std::int64_t t2 = 8000;
  int num_envs = 64;
  int horizon = 24;
  std::string keyframe_file;  // empty selects the builtin skill set
  std::string out_dir = "run";
  std::vector<std::string> terrain_types = {"flat", "slope", "bars", "discrete_footholds",
                                            "stairs"};
  int episode_steps = 300;
  double command_min = -0.6;
  double command_max = 1.0;
  double action_scale = 0.25;
  double eval_vx = 0.3;

  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 5;
  int minibatches = 4;
  double entropy_coef = 0.005;
  double grad_clip = 1.0;
  double learning_rate = 1e-3;
  double log_std_init = -1.0;
  double sigma = 0.8;  // imitation-weight ramp share

  double w_term = 1.0;
  double w_reg = 1.0;
  double w_res = 0.15;
  double w_sil = 1.0;

  double lambda_dtw = 1.0;
  bool eq1_verbatim_sign = false;
  int premium_capacity = 8;
  int disc_batch = 256;

  double beta = 0.1;
  int history_frames = 4;
  int v_dim = 2;
  int lat_dim = 8;

  int window_size = 200;
  double init_joint_noise = 0.05;
  double init_height_noise = 0.02;
  double init_pitch_noise_deg = 2.0;
  double cross_skill_prob = 0.25;

  std::vector<int> actor_hidden = {64, 64};
  std::vector<int> critic_hidden = {64, 64};
  std::vector<int> enc_hidden = {64, 64};
  std::vector<int> dec_hidden = {64, 64};
  std::vector<int> disc_hidden = {64, 64};

  int checkpoint_interval = 500;
};

TrainConfig preset_config(const std::string& name);
TrainConfig parse_config(const std::string& yaml_text);
TrainConfig load_config(const std::string& path);
std::string config_to_yaml(const TrainConfig& c);
void validate_config(const TrainConfig& c);

std::vector<TerrainType> terrain_mix(const TrainConfig& c);

// All network input/output widths for a given skill count. The
// solo8-dims preset reproduces the published full-scale table for audit
// and is rejected by the trainer.
struct NetworkDims {
  int n_skills = 0;
  int prop = 0;
  int privileged = 0;
  int frame = 0;
  int z = 0;
  int actor_in = 0;
  int actor_out = 0;
  int critic_in = 0;
  int enc_in = 0;
  int enc_out = 0;
  int dec_in = 0;
  int dec_out = 0;
  int disc_in = 0;
};

NetworkDims network_dims(const TrainConfig& c, int n_skills);

}  // namespace kiras
