#include "kiras/sim.hpp"

#include <algorithm>
#include <cmath>

namespace kiras {

DomainRandomization sample_randomization(Rng& rng) {
  DomainRandomization dr;
  dr.friction_coeff = uniform(rng, 0.5, 1.25);
  dr.payload_kg = uniform(rng, -0.5, 0.25);
  dr.com_shift = uniform(rng, -0.02, 0.05);
  dr.push_velocity = uniform(rng, -0.1, 0.1);
  dr.push_interval_s = 5.0;
  dr.actuation_delay_s = uniform(rng, 0.0, 0.015);
  dr.pd_stiffness_mult = uniform(rng, 0.8, 1.2);
  dr.pd_damping_mult = uniform(rng, 0.8, 1.2);
  return dr;
}

Command sample_command(Rng& rng, double lo, double hi) {
  if (hi < lo) throw InvalidArgument("command range is inverted");
  return {uniform(rng, lo, hi)};
}

void EnvSim::reset(const RobotState& state) {
  if (!state.finite()) throw InvalidArgument("reset state must be finite");
  state_ = state;
  for (auto& t : past_targets_) t = state.joint_pos;
  for (int leg = 0; leg < 2; ++leg)
    tangent_anchor_[static_cast<size_t>(leg)] =
        robot::foot_position(state_.base_x, state_.base_z, state_.pitch, state_.joint_pos(2 * leg),
                             state_.joint_pos(2 * leg + 1), leg)
            .x;
  substep_count_ = 0;
}

StepResult EnvSim::substep(const Eigen::Vector4d& commanded) {
  const auto push_every = static_cast<std::int64_t>(std::llround(dr_.push_interval_s / kDt));
  if (push_every > 0 && substep_count_ > 0 && substep_count_ % push_every == 0)
    state_.base_vx += dr_.push_velocity;

  const auto delay_substeps = std::min<size_t>(
      static_cast<size_t>(std::floor(dr_.actuation_delay_s / kDt)), past_targets_.size());
  const Eigen::Vector4d& applied =
      delay_substeps == 0 ? commanded : past_targets_[delay_substeps - 1];

  StepResult res;
  Eigen::Vector4d tau;
  for (int i = 0; i < 4; ++i) {
    const double raw = robot::kKp * dr_.pd_stiffness_mult * (applied(i) - state_.joint_pos(i)) -
                       robot::kKd * dr_.pd_damping_mult * state_.joint_vel(i);
    tau(i) = std::min(std::max(raw, -robot::kTorqueLimit), robot::kTorqueLimit);
  }

  const double mass = robot::kBaseMass + dr_.payload_kg;
  double fx = 0.0, fz = -mass * gravity_, pitch_torque = 0.0;
  pitch_torque += dr_.com_shift * std::cos(state_.pitch) * mass * gravity_;

  for (int leg = 0; leg < 2; ++leg) {
    const auto li = static_cast<size_t>(leg);
    const robot::Point p = robot::foot_position(state_.base_x, state_.base_z, state_.pitch,
                                                state_.joint_pos(2 * leg),
                                                state_.joint_pos(2 * leg + 1), leg);
    const robot::Point v = robot::foot_velocity(state_.base_vx, state_.base_vz, state_.pitch,
                                                state_.pitch_rate, state_.joint_pos(2 * leg),
                                                state_.joint_pos(2 * leg + 1),
                                                state_.joint_vel(2 * leg),
                                                state_.joint_vel(2 * leg + 1), leg);
    res.foot_pos[li] = p;
    res.foot_vel[li] = v;
    const double pen = terrain_.height(p.x) - p.z;
    if (pen > 0.0) {
      res.foot_contact[li] = true;
      const double fn = std::max(0.0, kContactStiffness * pen - kContactDamping * v.z);
      double ft = -kTangentStiffness * (p.x - tangent_anchor_[li]) - kTangentDamping * v.x;
      const double limit = dr_.friction_coeff * fn;
      if (std::abs(ft) > limit) {
        ft = std::copysign(limit, ft);
        tangent_anchor_[li] = p.x + (ft + kTangentDamping * v.x) / kTangentStiffness;
      }
      res.normal_force[li] = fn;
      res.tangent_force[li] = ft;
      fx += ft;
      fz += fn;
      const double rx = p.x - state_.base_x;
      const double rz = p.z - state_.base_z;
      pitch_torque += rz * ft - rx * fn;
    } else {
      tangent_anchor_[li] = p.x;
    }
  }

  const RobotState prev = state_;
  state_.base_vx += fx / mass * kDt;
  state_.base_vz += fz / mass * kDt;
  state_.pitch_rate += pitch_torque / robot::kBaseInertia * kDt;
  state_.joint_vel += tau / robot::kJointInertia * kDt;
  state_.base_x += state_.base_vx * kDt;
  state_.base_z += state_.base_vz * kDt;
  state_.pitch += state_.pitch_rate * kDt;
  state_.joint_pos += state_.joint_vel * kDt;
  for (int i = 0; i < 4; ++i) {
    if (state_.joint_pos(i) > robot::kJointLimit) {
      state_.joint_pos(i) = robot::kJointLimit;
      state_.joint_vel(i) = 0.0;
    } else if (state_.joint_pos(i) < -robot::kJointLimit) {
      state_.joint_pos(i) = -robot::kJointLimit;
      state_.joint_vel(i) = 0.0;
    }
  }

  if (!state_.finite()) {
    state_ = prev;
    res.diverged = true;
    res.collision = true;
  }
  if (state_.base_z - terrain_.height(state_.base_x) < kBaseClearance) res.collision = true;

  past_targets_ = {commanded, past_targets_[0], past_targets_[1]};
  substep_count_ += 1;
  res.state = state_;
  res.torques = tau;
  return res;
}

StepResult EnvSim::step(const Eigen::Vector4d& joint_targets, int decimation) {
  if (!joint_targets.allFinite()) throw InvalidArgument("joint targets must be finite");
  if (decimation < 1) throw InvalidArgument("decimation must be positive");
  StepResult res;
  bool collision = false, diverged = false;
  for (int k = 0; k < decimation; ++k) {
    res = substep(joint_targets);
    collision = collision || res.collision;
    diverged = diverged || res.diverged;
    if (diverged) break;
  }
  res.collision = collision;
  res.diverged = diverged;
  return res;
}

RobotState standing_state(const TerrainMap& terrain, double base_x, double clearance,
                          double pitch) {
  RobotState s;
  s.base_x = base_x;
  s.base_z = terrain.height(base_x) + clearance;
  s.pitch = pitch;
  for (int leg = 0; leg < 2; ++leg) {
    const robot::Point hip = robot::hip_position(s.base_x, s.base_z, pitch, leg);
    const double reach =
        std::clamp(hip.z - terrain.height(hip.x), 0.02, robot::kThigh + robot::kShank);
    const auto q = robot::leg_ik(reach, pitch);
    s.joint_pos(2 * leg) = q[0];
    s.joint_pos(2 * leg + 1) = q[1];
  }
  return s;
}

}  // namespace kiras
