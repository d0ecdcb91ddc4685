#pragma once

#include <array>

#include "kiras/common.hpp"

namespace kiras {

// Planar two-legged body, each leg a thigh+shank pair. Positive pitch tips
// the nose down; the body forward axis is (cos pitch, -sin pitch).
namespace robot {

inline constexpr double kThigh = 0.16;
inline constexpr double kShank = 0.16;
inline constexpr double kHipOffset = 0.15;
inline constexpr double kBaseMass = 2.0;
inline constexpr double kBaseInertia = 0.02;
inline constexpr double kJointInertia = 0.01;
inline constexpr double kKp = 4.0;
inline constexpr double kKd = 0.1;
inline constexpr double kTorqueLimit = 1.0;
inline constexpr double kGravity = 9.81;
inline constexpr double kJointLimit = 3.14159265358979323846;

struct Point {
  double x = 0.0;
  double z = 0.0;
};

// leg 0 is the front leg (offset along +forward), leg 1 the rear
inline Point hip_position(double base_x, double base_z, double pitch, int leg) {
  const double sgn = leg == 0 ? 1.0 : -1.0;
  return {base_x + sgn * kHipOffset * std::cos(pitch), base_z - sgn * kHipOffset * std::sin(pitch)};
}

// world angle of a segment measured from straight down
inline Point segment_dir(double alpha) { return {std::sin(alpha), -std::cos(alpha)}; }

inline Point foot_position(double base_x, double base_z, double pitch, double q_hip, double q_knee,
                           int leg) {
  Point p = hip_position(base_x, base_z, pitch, leg);
  const double a1 = q_hip - pitch;
  const double a2 = a1 + q_knee;
  p.x += kThigh * std::sin(a1) + kShank * std::sin(a2);
  p.z -= kThigh * std::cos(a1) + kShank * std::cos(a2);
  return p;
}

inline Point foot_velocity(double base_vx, double base_vz, double pitch, double pitch_rate,
                           double q_hip, double q_knee, double qd_hip, double qd_knee, int leg) {
  const double sgn = leg == 0 ? 1.0 : -1.0;
  const double a1 = q_hip - pitch;
  const double a2 = a1 + q_knee;
  const double a1d = qd_hip - pitch_rate;
  const double a2d = a1d + qd_knee;
  Point v{base_vx, base_vz};
  v.x += -sgn * kHipOffset * std::sin(pitch) * pitch_rate + kThigh * std::cos(a1) * a1d +
         kShank * std::cos(a2) * a2d;
  v.z += -sgn * kHipOffset * std::cos(pitch) * pitch_rate + kThigh * std::sin(a1) * a1d +
         kShank * std::sin(a2) * a2d;
  return v;
}

// joint angles that put the foot straight below the hip at distance `reach`,
// knee bent backward; exact at the workspace boundary (reach = thigh+shank
// gives both angles 0), the cosine clamp only absorbs rounding
inline std::array<double, 2> leg_ik(double reach, double pitch) {
  double c = (reach * reach - kThigh * kThigh - kShank * kShank) / (2.0 * kThigh * kShank);
  c = std::min(std::max(c, -1.0), 1.0);
  const double q_knee = -std::acos(c);
  const double beta = std::atan2(kShank * std::sin(q_knee), kThigh + kShank * std::cos(q_knee));
  const double q_hip = pitch - beta;
  return {q_hip, q_knee};
}

}  // namespace robot

struct RobotState {
  double base_x = 0.0;
  double base_z = 0.0;
  double pitch = 0.0;
  double base_vx = 0.0;
  double base_vz = 0.0;
  double pitch_rate = 0.0;
  Eigen::Vector4d joint_pos = Eigen::Vector4d::Zero();  // front hip, front knee, rear hip, rear knee
  Eigen::Vector4d joint_vel = Eigen::Vector4d::Zero();

  bool finite() const {
    return std::isfinite(base_x) && std::isfinite(base_z) && std::isfinite(pitch) &&
           std::isfinite(base_vx) && std::isfinite(base_vz) && std::isfinite(pitch_rate) &&
           joint_pos.allFinite() && joint_vel.allFinite();
  }
};

}  // namespace kiras
