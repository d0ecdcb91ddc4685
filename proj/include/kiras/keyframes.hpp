#pragma once

#include <string>
#include <vector>

#include "kiras/robot.hpp"

namespace kiras {

// single target pose fully specifying a skill
struct Keyframe {
  int skill_index = 0;
  Eigen::Vector4d joint_pos = Eigen::Vector4d::Zero();
  double base_height = 0.0;
  double pitch = 0.0;
};

// reduced observation used for keyframe comparison and the discriminator:
// [pitch, skill one-hot, joint positions, base height above terrain]
struct ImitationFrame {
  double pitch = 0.0;
  Vec skill_onehot;
  Eigen::Vector4d joint_pos = Eigen::Vector4d::Zero();
  double base_height = 0.0;

  int dim() const { return 6 + static_cast<int>(skill_onehot.size()); }
  Vec to_vec() const;
  static ImitationFrame from_vec(const Vec& v, int n_skills);
};

Vec onehot(int index, int n);

// joints from the posture by per-leg IK against the flat ground plane
Keyframe keyframe_from_posture(int skill_index, double base_height, double pitch);

std::vector<ImitationFrame> keyframe_trajectory(const Keyframe& k, int steps, int n_skills);

ImitationFrame phi(const RobotState& state, const Vec& skill_onehot, double ground_height);

// keyframe pose as a full state at x=0 on flat ground, zero velocities
RobotState keyframe_pose_state(const Keyframe& k);

struct SkillSet {
  std::vector<Keyframe> keyframes;
  std::vector<std::string> names;

  int count() const { return static_cast<int>(keyframes.size()); }
  int index_of(const std::string& name) const;
};

// walk 0.20/0, crawl 0.10/0, stilt 0.30/0, pitch_up 0.20/-15deg, pitch_down 0.20/+15deg
SkillSet builtin_skills();

// YAML list of skills, each with a name and either base_height+pitch_deg or
// explicit joint_pos (plus the posture fields used by the imitation frame)
SkillSet load_keyframes(const std::string& path);
SkillSet parse_keyframes(const std::string& yaml_text);
std::string keyframes_to_yaml(const SkillSet& skills);

}  // namespace kiras
