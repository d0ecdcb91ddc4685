#include "kiras/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace kiras {

int categorical(const Vec& probs, Rng& rng) {
  if (probs.size() == 0) throw InvalidArgument("empty probability vector");
  if (probs.minCoeff() < 0.0) throw InvalidArgument("negative probability");
  const double u = uniform(rng, 0.0, 1.0) * probs.sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

Vec inverse_value_probs(const Vec& shifted_values) {
  const Eigen::Index n = shifted_values.size();
  if (n < 2) throw InvalidArgument("skill probabilities need at least two skills");
  if (!shifted_values.allFinite() || shifted_values.minCoeff() <= 0.0)
    throw InvalidArgument("shifted skill values must be positive");
  const double total = shifted_values.sum();
  return ((1.0 - shifted_values.array() / total) / static_cast<double>(n - 1)).matrix();
}

SkillSampler::SkillSampler(int n_skills, int window_size)
    : n_skills_(n_skills), window_size_(window_size) {
  if (n_skills < 2) throw InvalidArgument("skill sampler needs at least two skills");
  if (window_size < 1) throw InvalidArgument("coverage window must be positive");
}

Vec SkillSampler::skill_probs(const Vec& values) {
  if (values.size() < 2) throw InvalidArgument("skill probabilities need at least two skills");
  if (!values.allFinite()) throw InvalidArgument("skill values must be finite");
  return inverse_value_probs((values.array() - values.minCoeff() + 1e-3).matrix());
}

int SkillSampler::coverage_substitute(int proposal) const {
  if (static_cast<int>(window_.size()) < window_size_) return proposal;
  std::vector<int> counts(static_cast<size_t>(n_skills_), 0);
  for (int idx : window_) counts[static_cast<size_t>(idx)] += 1;
  int absent = -1;
  for (int i = 0; i < n_skills_; ++i) {
    if (counts[static_cast<size_t>(i)] == 0) {
      absent = i;
      break;
    }
  }
  if (absent < 0) return proposal;
  const int max_count = *std::max_element(counts.begin(), counts.end());
  return counts[static_cast<size_t>(proposal)] == max_count ? absent : proposal;
}

int SkillSampler::sample(const Vec& values, Rng& rng) {
  if (values.size() != n_skills_) throw InvalidArgument("skill value count mismatch");
  const int proposal = categorical(skill_probs(values), rng);
  const int chosen = coverage_substitute(proposal);
  record(chosen);
  return chosen;
}

void SkillSampler::record(int index) {
  if (index < 0 || index >= n_skills_) throw InvalidArgument("skill index out of range");
  window_.push_back(index);
  while (static_cast<int>(window_.size()) > window_size_) window_.pop_front();
}

void SkillSampler::append_skill() { n_skills_ += 1; }

void SkillSampler::restore_window(const std::vector<int>& entries) {
  window_.clear();
  for (int idx : entries) record(idx);
}

RobotState sample_initial_state(const SkillSet& skills, int skill_index, const TerrainMap& terrain,
                                double base_x, Rng& rng, const InitNoise& noise) {
  const int n = skills.count();
  if (skill_index < 0 || skill_index >= n) throw InvalidArgument("skill index out of range");

  // fixed draw order: cross decision, pose skill, joints, height, pitch
  int pose_skill = skill_index;
  if (noise.cross_skill_prob > 0.0 && uniform(rng, 0.0, 1.0) < noise.cross_skill_prob && n > 1) {
    const int offset = static_cast<int>(uniform(rng, 0.0, 1.0) * (n - 1));
    pose_skill = (skill_index + 1 + std::min(offset, n - 2)) % n;
  }
  const Keyframe& k = skills.keyframes[static_cast<size_t>(pose_skill)];

  RobotState s;
  for (int j = 0; j < 4; ++j) {
    const double q = k.joint_pos(j) + uniform(rng, -noise.joint_rad, noise.joint_rad);
    s.joint_pos(j) = std::clamp(q, -robot::kJointLimit, robot::kJointLimit);
  }
  const double height = k.base_height + uniform(rng, -noise.height_m, noise.height_m);
  const double pitch =
      k.pitch + uniform(rng, -noise.pitch_deg, noise.pitch_deg) * M_PI / 180.0;
  s.base_x = base_x;
  s.base_z = terrain.height(base_x) + height;
  s.pitch = pitch;
  s.base_vx = 0.0;
  s.base_vz = 0.0;
  s.pitch_rate = 0.0;
  s.joint_vel.setZero();
  return s;
}

}  // namespace kiras
