#include "kiras/ppo.hpp"

#include <algorithm>
#include <numeric>

namespace kiras {

GaeResult gae(const Vec& rewards, const Vec& values, const std::vector<std::uint8_t>& dones,
              double bootstrap_value, double gamma, double lam) {
  const Eigen::Index n = rewards.size();
  if (values.size() != n || static_cast<Eigen::Index>(dones.size()) != n)
    throw InvalidArgument("gae input lengths differ");
  GaeResult out;
  out.advantages = Vec::Zero(n);
  out.returns = Vec::Zero(n);
  double next_adv = 0.0;
  double next_value = bootstrap_value;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double not_done = dones[static_cast<size_t>(t)] ? 0.0 : 1.0;
    const double delta = rewards(t) + gamma * next_value * not_done - values(t);
    next_adv = delta + gamma * lam * not_done * next_adv;
    out.advantages(t) = next_adv;
    out.returns(t) = next_adv + values(t);
    next_value = values(t);
  }
  return out;
}

std::pair<double, double> omega_schedule(std::int64_t t, std::int64_t T1, double sigma) {
  if (t < 0) throw InvalidArgument("schedule iteration must be non-negative");
  double w1 = 1.0;
  if (t < T1 && T1 > 0) {
    w1 = (1.0 - sigma) + sigma * static_cast<double>(t) / static_cast<double>(T1);
    w1 = std::min(std::max(w1, 0.0), 1.0);
  }
  return {w1, 1.0 - w1};
}

Vec normalize_advantages(const Vec& a) {
  if (a.size() == 0) throw InvalidArgument("empty advantage batch");
  const double mean = a.mean();
  const double var = (a.array() - mean).square().mean();
  const double std = std::max(std::sqrt(var), 1e-8);
  return (a.array() - mean).matrix() / std;
}

Vec mix_advantages(const Vec& a_task, const Vec& a_imit, double w1, double w2) {
  if (a_task.size() != a_imit.size()) throw InvalidArgument("advantage batch shapes differ");
  if (w2 == 0.0) return normalize_advantages(a_task);
  if (w1 == 0.0) return normalize_advantages(a_imit);
  return w1 * normalize_advantages(a_task) + w2 * normalize_advantages(a_imit);
}

Vec GaussianPolicy::sample(const Vec& mean, Rng& rng) const {
  Vec out(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i)
    out(i) = mean(i) + std::exp(log_std(i)) * normal(rng);
  return out;
}

double GaussianPolicy::log_prob(const Vec& mean, const Vec& action) const {
  constexpr double kLog2Pi = 1.8378770664093454836;
  double lp = -0.5 * static_cast<double>(mean.size()) * kLog2Pi - log_std.sum();
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double z = (action(i) - mean(i)) / std::exp(log_std(i));
    lp -= 0.5 * z * z;
  }
  return lp;
}

Vec GaussianPolicy::log_prob_batch(const Mat& means, const Mat& actions) const {
  constexpr double kLog2Pi = 1.8378770664093454836;
  const double base = -0.5 * static_cast<double>(means.rows()) * kLog2Pi - log_std.sum();
  Vec out(means.cols());
  for (Eigen::Index c = 0; c < means.cols(); ++c) {
    double lp = base;
    for (Eigen::Index i = 0; i < means.rows(); ++i) {
      const double z = (actions(i, c) - means(i, c)) / std::exp(log_std(i));
      lp -= 0.5 * z * z;
    }
    out(c) = lp;
  }
  return out;
}

double GaussianPolicy::entropy() const {
  constexpr double kLog2PiE = 2.8378770664093454836;
  return log_std.sum() + 0.5 * static_cast<double>(log_std.size()) * kLog2PiE;
}

double actor_loss_and_grads(const GaussianPolicy& policy, const Mat& obs, const Mat& actions,
                            const Vec& old_log_probs, const Vec& advantages, double clip,
                            double entropy_coef, NetGrads* grads, Vec* log_std_grad) {
  const Eigen::Index n = obs.cols();
  auto cache = policy.actor.forward_cached(obs);
  const Mat& means = cache.output();
  const Vec new_lp = policy.log_prob_batch(means, actions);

  // surrogate, mean over the batch
  double loss = 0.0;
  Mat upstream = Mat::Zero(means.rows(), n);
  Vec ls_grad = Vec::Zero(policy.log_std.size());
  for (Eigen::Index c = 0; c < n; ++c) {
    const double ratio = std::exp(new_lp(c) - old_log_probs(c));
    const double a = advantages(c);
    const double surr1 = ratio * a;
    const double surr2 = std::min(std::max(ratio, 1.0 - clip), 1.0 + clip) * a;
    loss += -std::min(surr1, surr2);
    if (surr1 <= surr2) {
      // d(-surr1)/d mean_i = -a * ratio * (act - mean)/var
      for (Eigen::Index i = 0; i < means.rows(); ++i) {
        const double sd = std::exp(policy.log_std(i));
        const double diff = actions(i, c) - means(i, c);
        upstream(i, c) = -a * ratio * diff / (sd * sd);
        ls_grad(i) += -a * ratio * (diff * diff / (sd * sd) - 1.0);
      }
    }
  }
  loss /= static_cast<double>(n);
  upstream /= static_cast<double>(n);
  ls_grad /= static_cast<double>(n);

  const double ent = policy.entropy();
  loss -= entropy_coef * ent;
  ls_grad.array() -= entropy_coef;  // d entropy / d log_std_i = 1

  if (grads) *grads = policy.actor.backward(cache, upstream);
  if (log_std_grad) *log_std_grad = ls_grad;
  return loss;
}

double critic_regression_step(DenseNet& critic, AdamState& adam, const Mat& obs,
                              const Vec& targets, double grad_clip) {
  auto cache = critic.forward_cached(obs);
  const Mat& v = cache.output();
  const Eigen::Index n = obs.cols();
  Mat upstream(1, n);
  double loss = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    const double err = v(0, c) - targets(c);
    loss += err * err;
    upstream(0, c) = 2.0 * err / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  NetGrads g = critic.backward(cache, upstream);
  if (!g.all_finite() || !std::isfinite(loss)) throw NumericalError("non-finite critic update");
  if (grad_clip > 0.0) {
    const double norm = std::sqrt(g.squared_norm());
    if (norm > grad_clip) g.scale(grad_clip / norm);
  }
  adam_step(critic, g, adam);
  return loss;
}

PpoLosses ppo_update(GaussianPolicy& policy, DenseNet& critic_task, DenseNet& critic_imit,
                     PpoOptimizers& opt, const RolloutBatch& batch, const PpoParams& params,
                     Rng& rng) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw InvalidArgument("empty rollout batch");
  if (batch.log_probs.size() != n || batch.advantages.size() != n ||
      batch.returns_task.size() != n || batch.returns_imit.size() != n ||
      batch.actor_obs.cols() != n || batch.critic_obs.cols() != n)
    throw InvalidArgument("rollout batch shapes differ");

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  PpoLosses losses;
  int updates = 0;
  const Eigen::Index mb_count = std::max(1, params.minibatches);
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index mb = 0; mb < mb_count; ++mb) {
      const Eigen::Index lo = mb * n / mb_count;
      const Eigen::Index hi = (mb + 1) * n / mb_count;
      const Eigen::Index m = hi - lo;
      if (m == 0) continue;

      Mat obs(batch.actor_obs.rows(), m), cobs(batch.critic_obs.rows(), m),
          acts(batch.actions.rows(), m);
      Vec old_lp(m), adv(m), ret_t(m), ret_i(m);
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index idx = order[static_cast<size_t>(lo + k)];
        obs.col(k) = batch.actor_obs.col(idx);
        cobs.col(k) = batch.critic_obs.col(idx);
        acts.col(k) = batch.actions.col(idx);
        old_lp(k) = batch.log_probs(idx);
        adv(k) = batch.advantages(idx);
        ret_t(k) = batch.returns_task(idx);
        ret_i(k) = batch.returns_imit(idx);
      }

      NetGrads ag;
      Vec lsg;
      const double aloss =
          actor_loss_and_grads(policy, obs, acts, old_lp, adv, params.clip, params.entropy_coef,
                               &ag, &lsg);
      if (!std::isfinite(aloss) || !ag.all_finite() || !lsg.allFinite())
        throw NumericalError("non-finite actor update");
      if (params.grad_clip > 0.0) {
        const double norm = std::sqrt(ag.squared_norm() + lsg.squaredNorm());
        if (norm > params.grad_clip) {
          ag.scale(params.grad_clip / norm);
          lsg *= params.grad_clip / norm;
        }
      }
      adam_step(policy.actor, ag, opt.actor);
      adam_step(policy.log_std, lsg, opt.log_std);

      losses.actor += aloss;
      losses.value_task += critic_regression_step(critic_task, opt.critic_task, cobs, ret_t,
                                                params.grad_clip);
      losses.value_imit += critic_regression_step(critic_imit, opt.critic_imit, cobs, ret_i,
                                                params.grad_clip);
      losses.entropy += policy.entropy();
      updates += 1;
    }
  }
  if (updates > 0) {
    losses.actor /= updates;
    losses.value_task /= updates;
    losses.value_imit /= updates;
    losses.entropy /= updates;
  }
  return losses;
}

}  // namespace kiras
