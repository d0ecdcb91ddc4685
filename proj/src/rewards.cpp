#include "kiras/rewards.hpp"

namespace kiras {

double termination_penalty(bool collision) { return collision ? -0.5 : 0.0; }

double residual_reward(const Vec& a, const Vec& a_flat, std::int64_t t, std::int64_t T1,
                       std::int64_t T2) {
  (void)T2;
  if (a.size() != a_flat.size()) throw InvalidArgument("residual action dims differ");
  if (t < T1) return 0.0;
  return -(a - a_flat).norm();
}

RewardBreakdown regularization_reward(const RewardInputs& in) {
  RewardBreakdown r;

  const double verr = in.command_vx - in.state.base_vx;
  r.tracking_lin_vel = 1.0 * std::exp(-verr * verr / 0.25);
  r.tracking_ang_vel = 0.5 * std::exp(-in.state.pitch_rate * in.state.pitch_rate / 0.25);
  r.action_rate = 0.2 * -(in.action - in.prev_action).squaredNorm();
  r.torques = 2.5e-5 * -in.applied_torques.squaredNorm();
  r.delta_torques = 1e-3 * -(in.applied_torques - in.prev_torques).squaredNorm();
  const Eigen::Vector4d qdd = (in.state.joint_vel - in.prev_joint_vel) / in.control_dt;
  r.joint_acceleration = 1.25e-8 * -qdd.squaredNorm();
  double overload = 0.0, drag = 0.0;
  for (int leg = 0; leg < 2; ++leg) {
    const auto li = static_cast<size_t>(leg);
    overload += std::max(0.0, in.normal_force[li] - 30.0);
    if (in.foot_contact[li]) drag += std::abs(in.foot_vx[li]);
  }
  r.feet_contact_forces = 1.0 * -overload;
  r.feet_drag = 0.5 * -drag;
  r.ang_vel = 0.1 * -(in.state.pitch_rate * in.state.pitch_rate);
  if (std::abs(in.command_vx) < 0.1)
    r.stand_still = 0.2 * -(in.state.joint_pos - in.default_joint_pos).norm();

  r.r_R = r.tracking_lin_vel + r.tracking_ang_vel + r.action_rate + r.torques + r.delta_torques +
          r.joint_acceleration + r.feet_contact_forces + r.feet_drag + r.ang_vel + r.stand_still +
          r.ang_vel_x + r.ang_vel_z + r.lin_vel_y;
  return r;
}

RewardBreakdown compute_rewards(const RewardInputs& in, bool collision, double res_term,
                                double sil_term, const RewardWeights& w) {
  RewardBreakdown r = regularization_reward(in);
  r.collision = termination_penalty(collision);
  r.r_T = r.collision;
  r.r_res = res_term;
  r.r_SI = sil_term;
  r.r_c = w.termination * r.r_T + w.regularization * r.r_R + w.residual * r.r_res;
  return r;
}

}  // namespace kiras
