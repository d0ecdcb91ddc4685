#pragma once

#include <array>
#include <cstdint>

#include "kiras/robot.hpp"
#include "kiras/terrain.hpp"

namespace kiras {

struct DomainRandomization {
  double friction_coeff = 1.0;
  double payload_kg = 0.0;
  double com_shift = 0.0;          // along the body forward axis
  double push_velocity = 0.0;      // added to base_vx at each push
  double push_interval_s = 5.0;
  double actuation_delay_s = 0.0;
  double pd_stiffness_mult = 1.0;
  double pd_damping_mult = 1.0;

  static DomainRandomization nominal() { return {}; }
};

DomainRandomization sample_randomization(Rng& rng);

struct Command {
  double target_vx = 0.0;
};

Command sample_command(Rng& rng, double lo = -0.6, double hi = 1.0);

struct StepResult {
  RobotState state;
  std::array<bool, 2> foot_contact{false, false};
  std::array<double, 2> normal_force{0.0, 0.0};
  std::array<double, 2> tangent_force{0.0, 0.0};
  std::array<robot::Point, 2> foot_pos{};
  std::array<robot::Point, 2> foot_vel{};
  Eigen::Vector4d torques = Eigen::Vector4d::Zero();  // last substep
  bool collision = false;  // base touched the ground during the step
  bool diverged = false;
};

// One simulated robot on one terrain. Substeps at dt with a short
// commanded-target queue standing in for actuation delay; pushes hit at
// fixed substep multiples of the push interval.
class EnvSim {
 public:
  static constexpr double kDt = 0.005;
  static constexpr int kDecimation = 4;
  static constexpr double kContactStiffness = 2000.0;
  static constexpr double kContactDamping = 50.0;
  static constexpr double kTangentStiffness = 2000.0;
  static constexpr double kTangentDamping = 50.0;
  static constexpr double kBaseClearance = 0.025;

  EnvSim() : terrain_(generate_terrain(TerrainType::Flat, 0, 0)) {}
  explicit EnvSim(TerrainMap terrain) : terrain_(std::move(terrain)) {}

  void reset(const RobotState& state);
  StepResult step(const Eigen::Vector4d& joint_targets, int decimation = kDecimation);

  const RobotState& state() const { return state_; }
  const TerrainMap& terrain() const { return terrain_; }
  void set_terrain(TerrainMap t) { terrain_ = std::move(t); }
  const DomainRandomization& randomization() const { return dr_; }
  void set_randomization(const DomainRandomization& dr) { dr_ = dr; }
  void set_gravity(double g) { gravity_ = g; }
  std::int64_t substep_count() const { return substep_count_; }

 private:
  StepResult substep(const Eigen::Vector4d& commanded);

  TerrainMap terrain_;
  RobotState state_;
  DomainRandomization dr_;
  double gravity_ = robot::kGravity;
  std::array<Eigen::Vector4d, 3> past_targets_{};  // 1, 2, 3 substeps ago
  std::array<double, 2> tangent_anchor_{0.0, 0.0};
  std::int64_t substep_count_ = 0;
};

// pose standing on the terrain: both feet straight below their hips,
// base at `clearance` above the terrain under the base
RobotState standing_state(const TerrainMap& terrain, double base_x, double clearance, double pitch);

}  // namespace kiras
