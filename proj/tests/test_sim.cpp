#include <doctest.h>

#include "kiras/sim.hpp"

using namespace kiras;

namespace {

bool states_equal(const RobotState& a, const RobotState& b) {
  return a.base_x == b.base_x && a.base_z == b.base_z && a.pitch == b.pitch &&
         a.base_vx == b.base_vx && a.base_vz == b.base_vz && a.pitch_rate == b.pitch_rate &&
         a.joint_pos == b.joint_pos && a.joint_vel == b.joint_vel;
}

TerrainMap deep_pit() {
  TerrainMap m;
  m.height_samples.assign(41, -100.0);
  m.spacing = 1.0;
  m.origin_x = -20.0;
  return m;
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("settled stance holds within a millimetre for a second") {
  const TerrainMap flat = generate_terrain(TerrainType::Flat, 0, 0);
  // feet loaded so the contact springs carry the full weight
  const double pen = robot::kBaseMass * robot::kGravity / (2.0 * EnvSim::kContactStiffness);
  RobotState s = standing_state(flat, 0.0, 0.20, 0.0);
  s.base_z -= pen;
  EnvSim sim(flat);
  sim.reset(s);
  const double z0 = sim.state().base_z;
  for (int step = 0; step < 50; ++step) {
    const StepResult r = sim.step(s.joint_pos);
    CHECK(!r.diverged);
    CHECK(std::abs(sim.state().base_z - z0) < 1e-3);
  }
  CHECK(std::abs(sim.state().pitch) < 1e-3);
}

TEST_CASE("null dynamics: zero gravity, no contact, zero targets stays zero") {
  EnvSim sim(deep_pit());
  sim.set_gravity(0.0);
  sim.reset(RobotState{});
  const StepResult r = sim.step(Eigen::Vector4d::Zero());
  CHECK(!r.collision);
  CHECK(states_equal(sim.state(), RobotState{}));
  for (int leg = 0; leg < 2; ++leg) {
    CHECK(!r.foot_contact[static_cast<size_t>(leg)]);
    CHECK(r.normal_force[static_cast<size_t>(leg)] == 0.0);
    CHECK(r.tangent_force[static_cast<size_t>(leg)] == 0.0);
  }
}

TEST_CASE("identical state and targets step bit-identically") {
  const TerrainMap flat = generate_terrain(TerrainType::Flat, 0, 0);
  const RobotState s = standing_state(flat, 0.0, 0.22, 0.05);
  const Eigen::Vector4d targets(0.3, -0.5, 0.2, -0.4);
  EnvSim a(flat), b(flat);
  a.reset(s);
  b.reset(s);
  for (int i = 0; i < 25; ++i) {
    a.step(targets);
    b.step(targets);
  }
  CHECK(states_equal(a.state(), b.state()));
}

TEST_CASE("four decimation-1 steps equal one decimation-4 step bit-exactly") {
  const TerrainMap flat = generate_terrain(TerrainType::Flat, 0, 0);
  const RobotState s = standing_state(flat, 0.0, 0.21, 0.0);
  DomainRandomization dr;
  dr.actuation_delay_s = 0.012;  // 2-substep delay exercises the target queue
  const Eigen::Vector4d t1(0.1, -0.2, 0.15, -0.25), t2(-0.3, 0.4, 0.0, 0.2);
  EnvSim a(flat), b(flat);
  a.set_randomization(dr);
  b.set_randomization(dr);
  a.reset(s);
  b.reset(s);
  for (const auto& t : {t1, t2}) {
    a.step(t, 4);
    for (int k = 0; k < 4; ++k) b.step(t, 1);
  }
  CHECK(states_equal(a.state(), b.state()));
}

TEST_CASE("actuation delay replays past targets in order") {
  const TerrainMap flat = generate_terrain(TerrainType::Flat, 0, 0);
  const RobotState s = standing_state(flat, 0.0, 0.21, 0.0);
  const Eigen::Vector4d hold = s.joint_pos;
  const Eigen::Vector4d target(0.5, -0.8, 0.5, -0.8);

  DomainRandomization delayed;
  delayed.actuation_delay_s = 0.015;  // 3 substeps
  EnvSim a(flat);
  a.set_randomization(delayed);
  a.reset(s);
  a.step(target, 4);

  EnvSim b(flat);
  b.reset(s);
  for (int k = 0; k < 3; ++k) b.step(hold, 1);
  b.step(target, 1);
  CHECK(states_equal(a.state(), b.state()));
}

TEST_CASE("body in free space never gains height under zero torque") {
  const TerrainMap flat = generate_terrain(TerrainType::Flat, 0, 0);
  RobotState s = standing_state(flat, 0.0, 0.25, 0.0);
  EnvSim sim(flat);
  sim.reset(s);
  const double z0 = s.base_z;
  double zmax = z0;
  for (int i = 0; i < 100; ++i) {
    sim.step(s.joint_pos);
    zmax = std::max(zmax, sim.state().base_z);
  }
  CHECK(zmax <= z0 + 1e-9);
}

TEST_CASE("no contact forces while both feet are above the surface") {
  const TerrainMap flat = generate_terrain(TerrainType::Flat, 0, 0);
  RobotState s = standing_state(flat, 0.0, 1.0, 0.0);
  EnvSim sim(flat);
  sim.reset(s);
  const StepResult r = sim.step(s.joint_pos);
  for (int leg = 0; leg < 2; ++leg) {
    CHECK(!r.foot_contact[static_cast<size_t>(leg)]);
    CHECK(r.normal_force[static_cast<size_t>(leg)] == 0.0);
    CHECK(r.tangent_force[static_cast<size_t>(leg)] == 0.0);
  }
}

TEST_CASE("pushes add exactly the push velocity at the push substep") {
  DomainRandomization dr;
  dr.push_velocity = 0.1;
  EnvSim pushed(deep_pit()), plain(deep_pit());
  pushed.set_randomization(dr);
  pushed.set_gravity(0.0);
  plain.set_gravity(0.0);
  pushed.reset(RobotState{});
  plain.reset(RobotState{});
  // push interval 5 s = 1000 substeps; first push fires on the 1001st
  for (int i = 0; i < 250; ++i) {
    pushed.step(Eigen::Vector4d::Zero());
    plain.step(Eigen::Vector4d::Zero());
  }
  CHECK(pushed.state().base_vx == 0.0);
  pushed.step(Eigen::Vector4d::Zero());
  plain.step(Eigen::Vector4d::Zero());
  CHECK(pushed.state().base_vx == 0.1);
  CHECK(plain.state().base_vx == 0.0);
}

TEST_CASE("base near the ground raises the collision flag") {
  const TerrainMap flat = generate_terrain(TerrainType::Flat, 0, 0);
  RobotState s = standing_state(flat, 0.0, 0.02, 0.0);
  EnvSim sim(flat);
  sim.reset(s);
  const StepResult r = sim.step(s.joint_pos);
  CHECK(r.collision);
}

TEST_CASE("divergence restores the previous state and flags the step") {
  const TerrainMap flat = generate_terrain(TerrainType::Flat, 0, 0);
  RobotState s;
  s.base_z = -1e306;  // contact force overflows on the first substep
  EnvSim sim(flat);
  sim.reset(s);
  const StepResult r = sim.step(Eigen::Vector4d::Zero());
  CHECK(r.diverged);
  CHECK(sim.state().finite());
  CHECK(sim.state().base_z == -1e306);
}

TEST_CASE("joint positions are clamped at the limits with velocity zeroed") {
  const TerrainMap flat = generate_terrain(TerrainType::Flat, 0, 0);
  RobotState s = standing_state(flat, 0.0, 1.0, 0.0);
  EnvSim sim(flat);
  sim.set_gravity(0.0);
  sim.reset(s);
  const Eigen::Vector4d extreme(10.0, -10.0, 10.0, -10.0);
  for (int i = 0; i < 2000; ++i) sim.step(extreme);
  for (int j = 0; j < 4; ++j) {
    CHECK(std::abs(sim.state().joint_pos(j)) <= robot::kJointLimit);
    CHECK(std::isfinite(sim.state().joint_vel(j)));
  }
}

TEST_CASE("torque magnitude never exceeds the limit") {
  const TerrainMap flat = generate_terrain(TerrainType::Flat, 0, 0);
  RobotState s = standing_state(flat, 0.0, 0.21, 0.0);
  EnvSim sim(flat);
  sim.reset(s);
  const StepResult r = sim.step(Eigen::Vector4d(3.0, -3.0, 3.0, -3.0));
  for (int j = 0; j < 4; ++j) CHECK(std::abs(r.torques(j)) <= robot::kTorqueLimit);
}

TEST_CASE("randomization draws stay inside the declared ranges") {
  Rng rng(42);
  for (int i = 0; i < 10000; ++i) {
    const DomainRandomization dr = sample_randomization(rng);
    CHECK(dr.friction_coeff >= 0.5);
    CHECK(dr.friction_coeff <= 1.25);
    CHECK(dr.payload_kg >= -0.5);
    CHECK(dr.payload_kg <= 0.25);
    CHECK(dr.actuation_delay_s >= 0.0);
    CHECK(dr.actuation_delay_s <= 0.015);
    CHECK(dr.pd_stiffness_mult >= 0.8);
    CHECK(dr.pd_stiffness_mult <= 1.2);
    CHECK(dr.pd_damping_mult >= 0.8);
    CHECK(dr.pd_damping_mult <= 1.2);
    CHECK(dr.push_interval_s == 5.0);
  }
  Rng r1(7), r2(7);
  const DomainRandomization a = sample_randomization(r1);
  const DomainRandomization b = sample_randomization(r2);
  CHECK(a.friction_coeff == b.friction_coeff);
  CHECK(a.actuation_delay_s == b.actuation_delay_s);
}

TEST_CASE("commands stay inside the configured range") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const Command c = sample_command(rng);
    CHECK(c.target_vx >= -0.6);
    CHECK(c.target_vx <= 1.0);
  }
  CHECK_THROWS_AS(sample_command(rng, 1.0, -1.0), InvalidArgument);
}

TEST_CASE("standing pose puts the feet on the terrain") {
  const TerrainMap flat = generate_terrain(TerrainType::Flat, 0, 0);
  for (double pitch : {0.0, 0.1, -0.1}) {
    const RobotState s = standing_state(flat, 0.3, 0.2, pitch);
    for (int leg = 0; leg < 2; ++leg) {
      const robot::Point f = robot::foot_position(s.base_x, s.base_z, s.pitch,
                                                  s.joint_pos(2 * leg), s.joint_pos(2 * leg + 1),
                                                  leg);
      CHECK(std::abs(f.z) < 1e-9);
    }
  }
}

TEST_CASE("reset rejects non-finite states") {
  EnvSim sim;
  RobotState bad;
  bad.base_z = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sim.reset(bad), InvalidArgument);
}

}  // TEST_SUITE
