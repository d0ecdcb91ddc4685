#pragma once

#include <deque>
#include <limits>
#include <vector>

#include "kiras/keyframes.hpp"
#include "kiras/net.hpp"

namespace kiras {

double dtw_distance(const std::vector<Vec>& a, const std::vector<Vec>& b);

std::vector<Vec> frames_to_vecs(const std::vector<ImitationFrame>& frames);
std::vector<Vec> normalize_frames(const std::vector<ImitationFrame>& frames,
                                  const RunningStat& stats);

// combined score: reward sum minus lambda * DTW distance to the keyframe
// trajectory; `verbatim_sign` restores the additive form
double score_trajectory(const std::vector<Vec>& traj, const std::vector<Vec>& keyframe_traj,
                        const std::vector<double>& rewards, double lambda_dtw = 1.0,
                        bool verbatim_sign = false);

// per-skill store of the best-scoring rollouts; the keyframe trajectory is
// slot 0 and never evicted, the rest is FIFO up to the capacity
class PremiumBuffer {
 public:
  PremiumBuffer() = default;
  PremiumBuffer(const SkillSet& skills, int trajectory_len, int capacity = 8);

  bool maybe_admit(int skill, std::vector<ImitationFrame> traj, double score);

  double best_score(int skill) const { return per_skill_.at(static_cast<size_t>(skill)).best; }
  int trajectory_count(int skill) const {
    return static_cast<int>(per_skill_.at(static_cast<size_t>(skill)).trajs.size());
  }
  const std::vector<ImitationFrame>& trajectory(int skill, int index) const {
    return per_skill_.at(static_cast<size_t>(skill)).trajs.at(static_cast<size_t>(index));
  }
  const std::vector<ImitationFrame>& keyframe_trajectory_of(int skill) const {
    return trajectory(skill, 0);
  }
  int skill_count() const { return static_cast<int>(per_skill_.size()); }
  int trajectory_len() const { return trajectory_len_; }
  int capacity() const { return capacity_; }

  // consecutive (frame, next frame) pair drawn uniformly over the skill's
  // stored trajectories and positions
  std::pair<const ImitationFrame*, const ImitationFrame*> sample_pair(int skill, Rng& rng) const;

  void append_skill(const Keyframe& k, int n_skills_after);
  void widen_onehot(int new_index);

  // checkpoint plumbing
  void restore_skill(int skill, std::vector<std::vector<ImitationFrame>> trajs, double best);

 private:
  struct Entry {
    std::deque<std::vector<ImitationFrame>> trajs;
    double best = -std::numeric_limits<double>::infinity();
  };
  std::vector<Entry> per_skill_;
  int trajectory_len_ = 0;
  int capacity_ = 8;
};

struct Discriminator {
  DenseNet net;
  AdamState adam;

  Discriminator() = default;
  Discriminator(int input_frame_dim, const std::vector<int>& hidden, double lr = 1e-3);
};

// one Adam step on E_real[(D-1)^2] + E_fake[(D+1)^2]; returns the pre-step
// loss; columns are transition pairs (phi_prev stacked on phi_cur)
double discriminator_update(Discriminator& d, const Mat& real_pairs, const Mat& fake_pairs);

double ls_gan_loss(const DenseNet& net, const Mat& real_pairs, const Mat& fake_pairs);
NetGrads ls_gan_grads(const DenseNet& net, const Mat& real_pairs, const Mat& fake_pairs,
                      double* loss);

double sil_reward(const DenseNet& net, const Vec& phi_prev, const Vec& phi_cur);
double sil_reward_from_score(double score);

// one row per stored frame: trajectory index, frame index, frame components
std::string premium_to_csv(const PremiumBuffer& buffer, int skill);

}  // namespace kiras
