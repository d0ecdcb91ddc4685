#include <doctest.h>

#include <cmath>

#include "kiras/rewards.hpp"

using namespace kiras;

namespace {

RewardInputs quiet_inputs() {
  RewardInputs in;
  in.action = Vec::Zero(4);
  in.prev_action = Vec::Zero(4);
  in.command_vx = 0.0;
  return in;
}

}  // namespace

TEST_SUITE("rewards") {

TEST_CASE("termination penalty is -0.5 on collision only") {
  CHECK(termination_penalty(false) == 0.0);
  CHECK(termination_penalty(true) == -0.5);
}

TEST_CASE("residual penalty is zero before the handover iteration") {
  Vec a = Vec::Ones(4), b = Vec::Zero(4);
  CHECK(residual_reward(a, b, 0, 100, 200) == 0.0);
  CHECK(residual_reward(a, b, 99, 100, 200) == 0.0);
  CHECK(residual_reward(a, a, 150, 100, 200) == 0.0);
  Vec unit = Vec::Zero(4);
  unit(2) = 1.0;
  CHECK(residual_reward(unit, Vec::Zero(4), 150, 100, 200) == -1.0);
  CHECK_THROWS_AS(residual_reward(Vec::Zero(3), Vec::Zero(4), 150, 100, 200), InvalidArgument);
}

TEST_CASE("perfect tracking earns the full tracking coefficients") {
  RewardInputs in = quiet_inputs();
  in.state.base_vx = 0.4;
  in.command_vx = 0.4;
  const RewardBreakdown r = regularization_reward(in);
  CHECK(r.tracking_lin_vel == 1.0);
  CHECK(r.tracking_ang_vel == 0.5);
}

TEST_CASE("velocity error decays the tracking term as a gaussian") {
  RewardInputs in = quiet_inputs();
  in.state.base_vx = 0.0;
  in.command_vx = 0.5;
  const RewardBreakdown r = regularization_reward(in);
  CHECK(r.tracking_lin_vel == doctest::Approx(std::exp(-0.25 / 0.25)).epsilon(1e-12));
}

TEST_CASE("quadratic penalties vanish at rest and scale with their coefficients") {
  RewardInputs in = quiet_inputs();
  RewardBreakdown r = regularization_reward(in);
  CHECK(r.action_rate == 0.0);
  CHECK(r.torques == 0.0);
  CHECK(r.delta_torques == 0.0);
  CHECK(r.joint_acceleration == 0.0);
  CHECK(r.feet_drag == 0.0);
  CHECK(r.feet_contact_forces == 0.0);

  in.action = Vec::Ones(4);            // ||da||^2 = 4
  in.applied_torques.setConstant(1.0); // ||tau||^2 = 4
  in.prev_torques.setConstant(0.5);    // ||dtau||^2 = 1
  in.state.joint_vel.setConstant(0.1);
  in.prev_joint_vel.setConstant(0.0);  // ||qdd||^2 = 4 * (0.1/0.02)^2 = 100
  r = regularization_reward(in);
  CHECK(r.action_rate == doctest::Approx(-0.2 * 4.0).epsilon(1e-12));
  CHECK(r.torques == doctest::Approx(-2.5e-5 * 4.0).epsilon(1e-12));
  CHECK(r.delta_torques == doctest::Approx(-1e-3 * 1.0).epsilon(1e-12));
  CHECK(r.joint_acceleration == doctest::Approx(-1.25e-8 * 100.0).epsilon(1e-12));
}

TEST_CASE("contact force above the threshold is penalized") {
  RewardInputs in = quiet_inputs();
  in.normal_force = {40.0, 20.0};
  const RewardBreakdown r = regularization_reward(in);
  CHECK(r.feet_contact_forces == doctest::Approx(-1.0 * 10.0).epsilon(1e-12));
}

TEST_CASE("foot drag counts only feet in contact") {
  RewardInputs in = quiet_inputs();
  in.foot_contact = {true, false};
  in.foot_vx = {0.3, 5.0};
  const RewardBreakdown r = regularization_reward(in);
  CHECK(r.feet_drag == doctest::Approx(-0.5 * 0.3).epsilon(1e-12));
}

TEST_CASE("pitch rate is penalized") {
  RewardInputs in = quiet_inputs();
  in.state.pitch_rate = 2.0;
  const RewardBreakdown r = regularization_reward(in);
  CHECK(r.ang_vel == doctest::Approx(-0.1 * 4.0).epsilon(1e-12));
}

TEST_CASE("stand still applies only under near-zero commands") {
  RewardInputs in = quiet_inputs();
  in.state.joint_pos << 0.5, 0.0, 0.0, 0.0;
  in.default_joint_pos.setZero();
  in.command_vx = 0.05;
  CHECK(regularization_reward(in).stand_still == doctest::Approx(-0.2 * 0.5).epsilon(1e-12));
  in.command_vx = 0.5;
  CHECK(regularization_reward(in).stand_still == 0.0);
}

TEST_CASE("planar placeholders stay zero") {
  RewardInputs in = quiet_inputs();
  in.state.base_vx = 1.0;
  in.state.pitch_rate = 3.0;
  const RewardBreakdown r = regularization_reward(in);
  CHECK(r.ang_vel_x == 0.0);
  CHECK(r.ang_vel_z == 0.0);
  CHECK(r.lin_vel_y == 0.0);
}

TEST_CASE("regularization channel is the sum of all terms") {
  RewardInputs in = quiet_inputs();
  in.state.base_vx = 0.2;
  in.command_vx = 0.5;
  in.state.pitch_rate = 0.7;
  in.action = Vec::Ones(4) * 0.3;
  in.applied_torques.setConstant(0.8);
  in.normal_force = {33.0, 12.0};
  in.foot_contact = {true, true};
  in.foot_vx = {0.2, -0.4};
  const RewardBreakdown r = regularization_reward(in);
  const double sum = r.collision + r.feet_contact_forces + r.action_rate + r.torques +
                     r.delta_torques + r.tracking_lin_vel + r.tracking_ang_vel + r.feet_drag +
                     r.ang_vel + r.stand_still + r.joint_acceleration + r.ang_vel_x + r.ang_vel_z +
                     r.lin_vel_y;
  CHECK(r.r_R == doctest::Approx(sum).epsilon(1e-12));
  CHECK(std::isfinite(r.r_R));
}

TEST_CASE("combined reward is the weighted channel sum") {
  RewardInputs in = quiet_inputs();
  in.state.base_vx = 0.3;
  in.command_vx = 0.3;
  RewardWeights w;
  const RewardBreakdown r = compute_rewards(in, true, -0.7, 0.4, w);
  CHECK(r.r_T == -0.5);
  CHECK(r.r_res == -0.7);
  CHECK(r.r_SI == 0.4);
  CHECK(r.r_c == doctest::Approx(1.0 * r.r_T + 1.0 * r.r_R + 0.15 * r.r_res).epsilon(1e-12));

  // doubling every channel doubles the combination
  RewardWeights w2 = w;
  const RewardBreakdown a = compute_rewards(in, false, -1.0, 0.0, w2);
  CHECK(a.r_c == doctest::Approx(a.r_R + 0.15 * -1.0).epsilon(1e-12));
}

TEST_CASE("imitation channel never leaks into the combined reward") {
  RewardInputs in = quiet_inputs();
  RewardWeights w;
  const RewardBreakdown lo = compute_rewards(in, false, 0.0, 0.0, w);
  const RewardBreakdown hi = compute_rewards(in, false, 0.0, 123.0, w);
  CHECK(lo.r_c == hi.r_c);
  CHECK(hi.r_SI == 123.0);
}

}  // TEST_SUITE
