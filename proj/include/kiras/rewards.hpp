#pragma once

#include <array>

#include "kiras/robot.hpp"
#include "kiras/sim.hpp"

namespace kiras {

struct RewardWeights {
  double termination = 1.0;
  double regularization = 1.0;
  double residual = 0.15;
  double sil = 1.0;
};

// one value per table row plus the aggregated channels
struct RewardBreakdown {
  double collision = 0.0;
  double feet_contact_forces = 0.0;
  double action_rate = 0.0;
  double torques = 0.0;
  double delta_torques = 0.0;
  double tracking_lin_vel = 0.0;
  double tracking_ang_vel = 0.0;
  double feet_drag = 0.0;
  double ang_vel = 0.0;
  double stand_still = 0.0;
  double joint_acceleration = 0.0;
  double ang_vel_x = 0.0;  // not representable in the planar preset, logged as 0
  double ang_vel_z = 0.0;
  double lin_vel_y = 0.0;

  double r_T = 0.0;
  double r_R = 0.0;
  double r_res = 0.0;
  double r_SI = 0.0;
  double r_c = 0.0;
};

struct RewardInputs {
  RobotState state;  // after the control step
  Eigen::Vector4d prev_joint_vel = Eigen::Vector4d::Zero();
  Vec action;
  Vec prev_action;
  Eigen::Vector4d applied_torques = Eigen::Vector4d::Zero();
  Eigen::Vector4d prev_torques = Eigen::Vector4d::Zero();
  std::array<bool, 2> foot_contact{false, false};
  std::array<double, 2> normal_force{0.0, 0.0};
  std::array<double, 2> foot_vx{0.0, 0.0};
  double command_vx = 0.0;
  Eigen::Vector4d default_joint_pos = Eigen::Vector4d::Zero();
  double control_dt = 0.02;
};

double termination_penalty(bool collision);

// 0 before T1, then -|a - a_flat| (pre-coefficient)
double residual_reward(const Vec& a, const Vec& a_flat, std::int64_t t, std::int64_t T1,
                       std::int64_t T2);

RewardBreakdown regularization_reward(const RewardInputs& in);

// fills r_T/r_res/r_SI and the combined channel
RewardBreakdown compute_rewards(const RewardInputs& in, bool collision, double res_term,
                                double sil_term, const RewardWeights& w);

}  // namespace kiras
