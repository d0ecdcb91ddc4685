#pragma once

#include <deque>

#include "kiras/keyframes.hpp"
#include "kiras/terrain.hpp"

namespace kiras {

// categorical draw by cumulative sum; probs must be non-negative
int categorical(const Vec& probs, Rng& rng);

// p_i = (1/(N-1)) * (1 - v_i / sum(v)) on already-shifted positive values
Vec inverse_value_probs(const Vec& shifted_values);

// proficiency-inverse skill selection with a sliding coverage window
class SkillSampler {
 public:
  explicit SkillSampler(int n_skills, int window_size = 200);

  // inverse_value_probs on vt = v - min(v) + 1e-3
  static Vec skill_probs(const Vec& values);

  int sample(const Vec& values, Rng& rng);

  // substitution applied on top of a categorical proposal once the window is
  // full: a skill absent from the window replaces a most-frequent proposal
  int coverage_substitute(int proposal) const;

  void record(int index);
  void append_skill();

  int n_skills() const { return n_skills_; }
  int window_size() const { return window_size_; }
  const std::deque<int>& window() const { return window_; }
  void restore_window(const std::vector<int>& entries);

 private:
  int n_skills_;
  int window_size_;
  std::deque<int> window_;
};

struct InitNoise {
  double joint_rad = 0.05;
  double height_m = 0.02;
  double pitch_deg = 2.0;
  double cross_skill_prob = 0.25;
};

// keyframe pose with bounded jitter, placed on the terrain at base_x; with
// probability cross_skill_prob the pose comes from a different uniformly
// drawn skill while the command stays on skill_index
RobotState sample_initial_state(const SkillSet& skills, int skill_index, const TerrainMap& terrain,
                                double base_x, Rng& rng, const InitNoise& noise = {});

}  // namespace kiras
