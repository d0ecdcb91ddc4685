#pragma once

#include <deque>

#include "kiras/keyframes.hpp"
#include "kiras/sim.hpp"

namespace kiras {

namespace obs_scale {
inline constexpr double kLinVel = 2.0;
inline constexpr double kAngVel = 0.25;
inline constexpr double kDofVel = 0.05;
inline constexpr double kHeights = 5.0;
}  // namespace obs_scale

inline constexpr int kTerrainSamples = 9;

// actor input is prop; critics additionally see privileged
inline int prop_dim(int n_skills) { return 14 + n_skills; }
inline int privileged_dim(int n_skills) { return 30 + n_skills; }
inline int frame_dim(int n_skills) { return 6 + n_skills; }

struct ObservationBundle {
  Vec prop;        // pitch, command, one-hot, joint err, scaled joint vel, prev action
  Vec privileged;  // prop + base velocities, gravity dir, foot heights, terrain samples
  ImitationFrame frame;
};

ObservationBundle observe(const RobotState& state, const Command& command,
                          const Vec& skill_onehot, const TerrainMap& terrain,
                          const Eigen::Vector4d& prev_action,
                          const Eigen::Vector4d& default_joint_pos);

// fixed-length window of past proprioceptive frames, oldest first; reset
// pads by repeating the first frame
class ObsHistory {
 public:
  ObsHistory() = default;
  ObsHistory(int frames, int dim) : frames_(frames), dim_(dim) {}

  void reset(const Vec& first) {
    check(first);
    window_.assign(static_cast<size_t>(frames_), first);
  }
  void push(const Vec& v) {
    check(v);
    if (window_.empty()) throw UsageError("history used before reset");
    window_.pop_front();
    window_.push_back(v);
  }
  Vec flat() const {
    if (window_.empty()) throw UsageError("history used before reset");
    Vec out(static_cast<Eigen::Index>(frames_) * dim_);
    for (size_t i = 0; i < window_.size(); ++i)
      out.segment(static_cast<Eigen::Index>(i) * dim_, dim_) = window_[i];
    return out;
  }
  int frames() const { return frames_; }
  int dim() const { return dim_; }

 private:
  void check(const Vec& v) const {
    if (v.size() != dim_) throw InvalidArgument("history frame dim mismatch");
  }
  int frames_ = 0;
  int dim_ = 0;
  std::deque<Vec> window_;
};

}  // namespace kiras
