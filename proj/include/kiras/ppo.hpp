#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "kiras/net.hpp"

namespace kiras {

struct GaeResult {
  Vec advantages;
  Vec returns;
};

// single environment stream; dones cut the bootstrap chain
GaeResult gae(const Vec& rewards, const Vec& values, const std::vector<std::uint8_t>& dones,
              double bootstrap_value, double gamma = 0.99, double lam = 0.95);

// imitation weight ramps down linearly: w1 rises from (1 - sigma) at t=0 to
// 1 at t=T1 and stays there
std::pair<double, double> omega_schedule(std::int64_t t, std::int64_t T1, double sigma = 0.8);

Vec normalize_advantages(const Vec& a);
Vec mix_advantages(const Vec& a_task, const Vec& a_imit, double w1, double w2);

struct GaussianPolicy {
  DenseNet actor;
  Vec log_std;  // state independent, learnable

  GaussianPolicy() = default;
  GaussianPolicy(const std::vector<int>& dims, double log_std_init = -1.0)
      : actor(dims), log_std(Vec::Constant(dims.back(), log_std_init)) {}

  int action_dim() const { return actor.out_dim(); }
  Vec sample(const Vec& mean, Rng& rng) const;
  double log_prob(const Vec& mean, const Vec& action) const;
  Vec log_prob_batch(const Mat& means, const Mat& actions) const;
  double entropy() const;
};

struct RolloutBatch {
  Mat actor_obs;   // (actor in dim, B)
  Mat critic_obs;  // (critic in dim, B)
  Mat actions;     // (action dim, B)
  Vec log_probs;
  Vec advantages;  // mixed, normalized
  Vec returns_task;
  Vec returns_imit;

  Eigen::Index size() const { return actions.cols(); }
};

struct PpoParams {
  double clip = 0.2;
  int epochs = 5;
  int minibatches = 4;
  double entropy_coef = 0.005;
  double grad_clip = 1.0;
};

struct PpoLosses {
  double actor = 0.0;
  double value_task = 0.0;
  double value_imit = 0.0;
  double entropy = 0.0;
};

struct PpoOptimizers {
  AdamState actor;
  AdamVecState log_std;
  AdamState critic_task;
  AdamState critic_imit;
};

// loss of the clipped surrogate objective with entropy bonus, exposed for
// gradient checks; upstream gradients returned through the out parameters
double actor_loss_and_grads(const GaussianPolicy& policy, const Mat& obs, const Mat& actions,
                            const Vec& old_log_probs, const Vec& advantages, double clip,
                            double entropy_coef, NetGrads* grads, Vec* log_std_grad);

// one clipped-gradient Adam step of the critic toward `targets`; returns the
// pre-step MSE
double critic_regression_step(DenseNet& critic, AdamState& adam, const Mat& obs,
                              const Vec& targets, double grad_clip);

PpoLosses ppo_update(GaussianPolicy& policy, DenseNet& critic_task, DenseNet& critic_imit,
                     PpoOptimizers& opt, const RolloutBatch& batch, const PpoParams& params,
                     Rng& rng);

}  // namespace kiras
