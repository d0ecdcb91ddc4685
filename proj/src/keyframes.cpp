#include "kiras/keyframes.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace kiras {

Vec ImitationFrame::to_vec() const {
  Vec v(dim());
  v(0) = pitch;
  v.segment(1, skill_onehot.size()) = skill_onehot;
  v.segment(1 + skill_onehot.size(), 4) = joint_pos;
  v(dim() - 1) = base_height;
  return v;
}

ImitationFrame ImitationFrame::from_vec(const Vec& v, int n_skills) {
  if (v.size() != 6 + n_skills) throw InvalidArgument("imitation frame size mismatch");
  ImitationFrame f;
  f.pitch = v(0);
  f.skill_onehot = v.segment(1, n_skills);
  f.joint_pos = v.segment(1 + n_skills, 4);
  f.base_height = v(5 + n_skills);
  return f;
}

Vec onehot(int index, int n) {
  if (index < 0 || index >= n) throw InvalidArgument("one-hot index out of range");
  Vec v = Vec::Zero(n);
  v(index) = 1.0;
  return v;
}

Keyframe keyframe_from_posture(int skill_index, double base_height, double pitch) {
  Keyframe k;
  k.skill_index = skill_index;
  k.base_height = base_height;
  k.pitch = pitch;
  for (int leg = 0; leg < 2; ++leg) {
    const robot::Point hip = robot::hip_position(0.0, base_height, pitch, leg);
    const double reach = hip.z;
    if (reach > robot::kThigh + robot::kShank + 1e-12 || reach < 0.02)
      throw InvalidArgument("posture outside the leg workspace");
    const auto q = robot::leg_ik(reach, pitch);
    k.joint_pos(2 * leg) = q[0];
    k.joint_pos(2 * leg + 1) = q[1];
  }
  return k;
}

std::vector<ImitationFrame> keyframe_trajectory(const Keyframe& k, int steps, int n_skills) {
  if (steps < 2) throw InvalidArgument("keyframe trajectory needs at least 2 steps");
  ImitationFrame f;
  f.pitch = k.pitch;
  f.skill_onehot = onehot(k.skill_index, n_skills);
  f.joint_pos = k.joint_pos;
  f.base_height = k.base_height;
  return std::vector<ImitationFrame>(static_cast<size_t>(steps), f);
}

ImitationFrame phi(const RobotState& state, const Vec& skill_onehot, double ground_height) {
  ImitationFrame f;
  f.pitch = state.pitch;
  f.skill_onehot = skill_onehot;
  f.joint_pos = state.joint_pos;
  f.base_height = state.base_z - ground_height;
  return f;
}

RobotState keyframe_pose_state(const Keyframe& k) {
  RobotState s;
  s.base_z = k.base_height;
  s.pitch = k.pitch;
  s.joint_pos = k.joint_pos;
  return s;
}

int SkillSet::index_of(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw InvalidArgument("unknown skill: " + name);
}

SkillSet builtin_skills() {
  const double deg = M_PI / 180.0;
  SkillSet s;
  s.names = {"walk", "crawl", "stilt", "pitch_up", "pitch_down"};
  s.keyframes = {
      keyframe_from_posture(0, 0.20, 0.0),
      keyframe_from_posture(1, 0.10, 0.0),
      keyframe_from_posture(2, 0.30, 0.0),
      keyframe_from_posture(3, 0.20, -15.0 * deg),
      keyframe_from_posture(4, 0.20, 15.0 * deg),
  };
  return s;
}

namespace {

void validate_feet_on_ground(const Keyframe& k) {
  for (int leg = 0; leg < 2; ++leg) {
    const robot::Point foot = robot::foot_position(0.0, k.base_height, k.pitch,
                                                   k.joint_pos(2 * leg), k.joint_pos(2 * leg + 1), leg);
    if (std::abs(foot.z) > 1e-3)
      throw InvalidArgument("keyframe feet are off the ground by more than 1 mm");
  }
}

}  // namespace

SkillSet parse_keyframes(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw IoError(std::string("keyframe file parse failure: ") + e.what());
  }
  const YAML::Node skills = root["skills"];
  if (!skills || !skills.IsSequence() || skills.size() == 0)
    throw IoError("keyframe file needs a non-empty 'skills' list");

  SkillSet out;
  const double deg = M_PI / 180.0;
  for (size_t i = 0; i < skills.size(); ++i) {
    const YAML::Node& entry = skills[i];
    if (!entry["name"]) throw IoError("keyframe entry " + std::to_string(i) + " lacks a name");
    const auto idx = static_cast<int>(i);
    const double height = entry["base_height"] ? entry["base_height"].as<double>() : 0.20;
    const double pitch = entry["pitch_deg"] ? entry["pitch_deg"].as<double>() * deg : 0.0;
    Keyframe k;
    if (entry["joint_pos"]) {
      const YAML::Node jp = entry["joint_pos"];
      if (!jp.IsSequence() || jp.size() != 4)
        throw IoError("joint_pos of skill '" + entry["name"].as<std::string>() +
                      "' must list 4 angles");
      k.skill_index = idx;
      k.base_height = height;
      k.pitch = pitch;
      for (int j = 0; j < 4; ++j) k.joint_pos(j) = jp[static_cast<size_t>(j)].as<double>();
      validate_feet_on_ground(k);
    } else {
      k = keyframe_from_posture(idx, height, pitch);
    }
    const std::string name = entry["name"].as<std::string>();
    for (const auto& seen : out.names)
      if (seen == name) throw IoError("duplicate skill name '" + name + "'");
    out.keyframes.push_back(k);
    out.names.push_back(name);
  }
  return out;
}

SkillSet load_keyframes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open keyframe file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_keyframes(ss.str());
}

std::string keyframes_to_yaml(const SkillSet& skills) {
  std::ostringstream os;
  os.precision(17);
  os << "skills:\n";
  for (int i = 0; i < skills.count(); ++i) {
    const Keyframe& k = skills.keyframes[static_cast<size_t>(i)];
    os << "  - name: " << skills.names[static_cast<size_t>(i)] << "\n";
    os << "    base_height: " << k.base_height << "\n";
    os << "    pitch_deg: " << k.pitch * 180.0 / M_PI << "\n";
    os << "    joint_pos: [" << k.joint_pos(0) << ", " << k.joint_pos(1) << ", " << k.joint_pos(2)
       << ", " << k.joint_pos(3) << "]\n";
  }
  return os.str();
}

}  // namespace kiras
