#pragma once

#include <string>
#include <vector>

#include "kiras/checkpoint.hpp"
#include "kiras/config.hpp"
#include "kiras/ece.hpp"
#include "kiras/keyframes.hpp"
#include "kiras/observation.hpp"
#include "kiras/ppo.hpp"
#include "kiras/sampler.hpp"
#include "kiras/self_imitation.hpp"
#include "kiras/sim.hpp"

namespace kiras {

struct EvalReport {
  int skill = 0;
  int episodes = 0;
  double mean_base_height = 0.0;
  double mean_pitch_deg = 0.0;
  double dtw = 0.0;
  double cosine = 0.0;
  double success_rate = 0.0;
};

struct ScriptEntry {
  double time = 0.0;
  int skill = 0;
  double target_vx = 0.0;
};

// whitespace-separated (time_s, skill_index, target_vx) triples, '#'
// comments; must start at time 0 with non-decreasing times
std::vector<ScriptEntry> parse_replay_script(const std::string& text);
std::vector<ScriptEntry> load_replay_script(const std::string& path);

// mean per-step cosine similarity over the common prefix
double mean_cosine(const std::vector<Vec>& a, const std::vector<Vec>& b);

// Two-stage training orchestrator. Stage 1 (t < t1) runs on flat ground
// with the imitation machinery active; at t1 the actor snapshot becomes
// the residual reference, envs move to the terrain mix with per-env
// curriculum, and the imitation channel is zeroed. Saving a checkpoint
// rounds weights to single precision and, when envs are mid-episode,
// first advances them to a fresh reset; the file is then an exact
// snapshot, so load -> save round-trips bit-identically and a resumed
// run continues exactly like the uninterrupted one.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  void iterate();
  void train_loop();
  void train_until(std::int64_t stop);

  std::int64_t iteration() const { return iteration_; }
  std::string metrics_header() const;
  const std::string& last_metrics_row() const { return last_row_; }

  void save(const std::string& path);
  static Trainer load(const std::string& path);
  static Trainer from_file(const CheckpointFile& f);
  void set_out_dir(const std::string& dir) { cfg_.out_dir = dir; }

  EvalReport evaluate(int skill, TerrainType terrain, int level, int episodes) const;
  EvalReport evaluate(int skill, TerrainType terrain, int level, int episodes, double vx) const;
  std::string replay(const std::vector<ScriptEntry>& script) const;
  void add_skill(const Keyframe& k, const std::string& name, std::int64_t new_t1,
                 std::int64_t new_t2);

  const TrainConfig& config() const { return cfg_; }
  const SkillSet& skill_set() const { return skills_; }
  const NetworkDims& dims() const { return dims_; }
  const GaussianPolicy& policy() const { return policy_; }
  const DenseNet& critic_task() const { return critic_task_; }
  const DenseNet& critic_imit() const { return critic_imit_; }
  const EceNets& ece() const { return ece_; }
  const DenseNet& disc_net() const { return disc_.net; }
  const PremiumBuffer& premium() const { return premium_; }
  const SkillSampler& sampler() const { return sampler_; }
  const RunningStat& frame_stats() const { return stats_; }
  bool has_flat_actor() const { return has_flat_; }
  const DenseNet& flat_actor() const { return flat_actor_; }

  Vec skill_values() const;
  Vec sampling_probs() const;

 private:
  struct EnvRunner {
    EnvSim sim;
    TerrainType ttype = TerrainType::Flat;
    int level = 0;
    int skill = 0;
    Command command;
    Eigen::Vector4d default_joints = Eigen::Vector4d::Zero();
    ObsHistory history;
    Eigen::Vector4d prev_action = Eigen::Vector4d::Zero();
    Eigen::Vector4d prev_torques = Eigen::Vector4d::Zero();
    int steps = 0;
    double start_x = 0.0;
    ImitationFrame last_frame;
    std::vector<ImitationFrame> frames;
    std::vector<double> rc;
  };

  Trainer(const TrainConfig& cfg, SkillSet skills);

  void stage_transition();
  void reset_env(int i);
  void rebuild_env_derived(int i);
  void reset_all_envs();
  void set_env_terrain(int i, TerrainType type, int level);
  std::uint64_t terrain_seed(int env, TerrainType type, int level) const;
  Mat reference_obs() const;
  void quantize_params();
  CheckpointFile to_file() const;
  void restore(const CheckpointFile& f);
  std::string metrics_row(std::int64_t t, const std::vector<double>& reward_means,
                          double disc_loss, const EceTerms& ece_terms, double omega1,
                          const PpoLosses& losses) const;

  TrainConfig cfg_;
  SkillSet skills_;
  NetworkDims dims_;
  TerrainMap ref_terrain_;

  GaussianPolicy policy_;
  DenseNet critic_task_;
  DenseNet critic_imit_;
  DenseNet flat_actor_;
  bool has_flat_ = false;
  EceNets ece_;
  Discriminator disc_;
  PpoOptimizers ppo_opt_;
  EceOptimizers ece_opt_;
  PremiumBuffer premium_;
  RunningStat stats_;
  SkillSampler sampler_;
  double ece_best_ = 0.0;

  std::vector<EnvRunner> envs_;
  Rng scheduler_rng_;
  Rng train_rng_;
  std::vector<Rng> env_rngs_;

  std::int64_t iteration_ = 0;
  std::string last_row_;
  int threads_ = 1;
};

}  // namespace kiras
