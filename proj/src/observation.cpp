#include "kiras/observation.hpp"

namespace kiras {

ObservationBundle observe(const RobotState& state, const Command& command,
                          const Vec& skill_onehot, const TerrainMap& terrain,
                          const Eigen::Vector4d& prev_action,
                          const Eigen::Vector4d& default_joint_pos) {
  const int n = static_cast<int>(skill_onehot.size());
  double s = 0.0;
  int ones = 0;
  for (int i = 0; i < n; ++i) {
    s += skill_onehot(i);
    if (skill_onehot(i) == 1.0) ones += 1;
  }
  if (ones != 1 || std::abs(s - 1.0) > 1e-12)
    throw InvalidArgument("skill vector must be one-hot");

  ObservationBundle b;
  b.prop.resize(prop_dim(n));
  b.prop(0) = state.pitch;
  b.prop(1) = command.target_vx;
  b.prop.segment(2, n) = skill_onehot;
  b.prop.segment(2 + n, 4) = state.joint_pos - default_joint_pos;
  b.prop.segment(6 + n, 4) = state.joint_vel * obs_scale::kDofVel;
  b.prop.segment(10 + n, 4) = prev_action;

  b.privileged.resize(privileged_dim(n));
  b.privileged.head(prop_dim(n)) = b.prop;
  Eigen::Index at = prop_dim(n);
  b.privileged(at++) = state.base_vx * obs_scale::kLinVel;
  b.privileged(at++) = state.base_vz * obs_scale::kLinVel;
  b.privileged(at++) = state.pitch_rate * obs_scale::kAngVel;
  b.privileged(at++) = std::sin(state.pitch);   // gravity direction in the body frame
  b.privileged(at++) = -std::cos(state.pitch);
  for (int leg = 0; leg < 2; ++leg) {
    const robot::Point foot =
        robot::foot_position(state.base_x, state.base_z, state.pitch, state.joint_pos(2 * leg),
                             state.joint_pos(2 * leg + 1), leg);
    b.privileged(at++) = (foot.z - terrain.height(foot.x)) * obs_scale::kHeights;
  }
  for (int k = 0; k < kTerrainSamples; ++k) {
    const double x = state.base_x + 0.05 * static_cast<double>(k);
    b.privileged(at++) = (terrain.height(x) - state.base_z) * obs_scale::kHeights;
  }

  b.frame = phi(state, skill_onehot, terrain.height(state.base_x));
  return b;
}

}  // namespace kiras
