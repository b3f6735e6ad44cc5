#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dexhand/control.hpp"
#include "dexhand/plant.hpp"

using namespace dexhand;
using Catch::Approx;

namespace {

constexpr double kDt = 1.0 / 30.0;

PidOutput step_single(double q_m, double q_d, const PidGains& g, PidState s, double dt = kDt) {
  Angles15 m{}, d{};
  m[0] = q_m;
  d[0] = q_d;
  return pid_step(g, s, d, m, dt);
}

Trajectory constant_setpoint(double deg, int joint, int samples) {
  Trajectory traj;
  for (int i = 0; i < samples; ++i) {
    Angles15 q{};
    q[joint] = deg;
    traj.samples.push_back({i * kDt, q});
  }
  return traj;
}

}  // namespace

TEST_CASE("pid controller") {
  PidGains gains;

  SECTION("worked single-step example") {
    PidOutput out = step_single(2.0, 0.0, gains, PidState{});
    REQUIRE(out.q_r[0] == Approx(1.2).margin(1e-12));
    REQUIRE(pid_command(out.q_r[0]) == Approx(-1.0));
  }

  SECTION("zero error is a fixed point") {
    PidState s;
    for (int i = 0; i < 50; ++i) {
      PidOutput out = step_single(5.0, 5.0, gains, s);
      REQUIRE(out.q_r[0] == Approx(0.0).margin(1e-15));
      s = out.state;
    }
    REQUIRE(s.integral[0] == Approx(0.0).margin(1e-15));
  }

  SECTION("response is linear in the error for a fresh state") {
    PidOutput a = step_single(1.0, 0.0, gains, PidState{});
    PidOutput b = step_single(3.0, 0.0, gains, PidState{});
    REQUIRE(b.q_r[0] == Approx(3.0 * a.q_r[0]).margin(1e-12));
  }

  SECTION("integral term accumulates and clamps") {
    PidState s;
    double expected = 0.0;
    for (int i = 0; i < 300; ++i) {
      PidOutput out = step_single(10.0, 0.0, gains, s);
      expected = std::min(expected + 10.0, kIntegralClamp);
      REQUIRE(out.state.integral[0] == Approx(expected).margin(1e-12));
      s = out.state;
    }
    REQUIRE(s.integral[0] == Approx(kIntegralClamp));
  }

  SECTION("derivative term sees the error change") {
    PidGains g;
    g.kd = 0.3;
    PidOutput first = step_single(2.0, 0.0, g, PidState{});
    PidOutput second = step_single(2.0, 0.0, g, first.state);
    REQUIRE(first.q_r[0] == Approx(0.5 * 2.0 + 0.1 * 2.0 + 0.3 * 2.0 / kDt).margin(1e-12));
    REQUIRE(second.q_r[0] == Approx(0.5 * 2.0 + 0.1 * 4.0).margin(1e-12));
  }

  SECTION("command clamps to the actuator range") {
    REQUIRE(pid_command(250.0) == Approx(-1.0));
    REQUIRE(pid_command(-250.0) == Approx(1.0));
    REQUIRE(pid_command(0.4) == Approx(-0.4));
  }

  SECTION("per-joint kp applies independently") {
    PidGains g;
    g.kp[3] = 2.0;
    Angles15 m{}, d{};
    m[0] = 1.0;
    m[3] = 1.0;
    PidOutput out = pid_step(g, PidState{}, d, m, kDt);
    REQUIRE(out.q_r[0] == Approx(0.6));
    REQUIRE(out.q_r[3] == Approx(2.1));
  }

  SECTION("negative gains are rejected") {
    PidGains g;
    g.ki = -0.1;
    REQUIRE_THROWS_AS(g.validate(), DomainError);
    g = PidGains{};
    g.kp[4] = -1.0;
    REQUIRE_THROWS_AS(g.validate(), DomainError);
  }
}

TEST_CASE("motor joint plant") {
  MotorJointPlant plant;

  SECTION("full command settles at the gain/spring equilibrium") {
    REQUIRE(plant.equilibrium(1.0) == Approx(45.0));
    double angle = 0.0;
    for (int i = 0; i < 3000; ++i) angle = plant_step(plant, angle, 1.0, kDt).angle;
    REQUIRE(angle == Approx(45.0).margin(1e-6));
  }

  SECTION("zero command decays back to rest") {
    double angle = 30.0;
    for (int i = 0; i < 3000; ++i) angle = plant_step(plant, angle, 0.0, kDt).angle;
    REQUIRE(angle == Approx(0.0).margin(1e-6));
  }

  SECTION("limits clamp and set the flag") {
    MotorJointPlant tight = plant;
    tight.limits = {0.0, 10.0};
    PlantStep out = plant_step(tight, 9.9, 1.0, 1.0);
    REQUIRE(out.angle == Approx(10.0));
    REQUIRE(out.clamped);
    out = plant_step(tight, 5.0, 0.1, kDt);
    REQUIRE_FALSE(out.clamped);
  }

  SECTION("invalid parameters are rejected") {
    MotorJointPlant bad = plant;
    bad.gain = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), DomainError);
    bad = plant;
    bad.rest_angle = -10.0;
    REQUIRE_THROWS_AS(bad.validate(), DomainError);
  }

  SECTION("default roll joints swing both ways") {
    auto plants = default_plants();
    REQUIRE(plants[joint_index(2, 0)].limits[0] == Approx(-90.0));
    REQUIRE(plants[joint_index(2, 1)].limits[0] == Approx(0.0));
  }
}

TEST_CASE("trajectory replay") {
  SECTION("a constant setpoint converges and the log has one block per sample") {
    Trajectory traj = constant_setpoint(30.0, 1, 1500);
    ReplayLog log = replay_trajectory(traj, default_plants(), PidGains{}, kDt);
    REQUIRE(log.rows.size() == traj.samples.size() * 15);
    double final_q_m = -1.0;
    for (const auto& row : log.rows)
      if (row.joint == 1 && row.t == Approx(traj.samples.back().t)) final_q_m = row.q_m;
    REQUIRE(final_q_m == Approx(30.0).margin(0.1));
  }

  SECTION("joints the trajectory never commands stay parked") {
    Trajectory traj = constant_setpoint(20.0, 4, 200);
    ReplayLog log = replay_trajectory(traj, default_plants(), PidGains{}, kDt);
    for (const auto& row : log.rows)
      if (row.joint != 4) REQUIRE(row.q_m == Approx(0.0).margin(1e-9));
  }

  SECTION("non-increasing timestamps are rejected") {
    Trajectory traj;
    traj.samples.push_back({0.0, Angles15{}});
    traj.samples.push_back({0.0, Angles15{}});
    REQUIRE_THROWS_AS(traj.validate(), DomainError);
  }

  SECTION("csv header and row shape") {
    Trajectory traj = constant_setpoint(5.0, 0, 1);
    ReplayLog log = replay_trajectory(traj, default_plants(), PidGains{}, kDt);
    std::ostringstream out;
    write_replay_csv(log, out);
    std::istringstream in(out.str());
    std::string line;
    REQUIRE(std::getline(in, line));
    REQUIRE(line == "t,joint,q_d,q_m,q_r,saturated");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      ++rows;
      REQUIRE(std::count(line.begin(), line.end(), ',') == 5);
    }
    REQUIRE(rows == 15);
  }
}

TEST_CASE("delta binarization") {
  SECTION("threshold separates held from moved joints") {
    Trajectory traj;
    traj.samples.resize(3);
    traj.samples[0].t = 0.0;
    traj.samples[1].t = kDt;
    traj.samples[2].t = 2 * kDt;
    traj.samples[1].q_d[0] = 1.0;
    traj.samples[1].q_d[2] = -0.6;
    traj.samples[1].q_d[3] = 0.49;
    traj.samples[2].q_d = traj.samples[1].q_d;
    traj.samples[2].q_d[5] = 0.5;
    std::vector<Command15> bits = binarize_deltas(traj, 0.5);
    REQUIRE(bits.size() == 2);
    REQUIRE(bits[0][0] == 1);
    REQUIRE(bits[0][2] == 1);
    REQUIRE(bits[0][3] == 0);
    REQUIRE(bits[1][0] == 0);
    REQUIRE(bits[1][5] == 1);
  }

  SECTION("boundary magnitude counts as movement") {
    Trajectory traj;
    traj.samples.resize(2);
    traj.samples[1].t = kDt;
    traj.samples[1].q_d[7] = 0.5;
    REQUIRE(binarize_deltas(traj, 0.5)[0][7] == 1);
  }

  SECTION("short inputs and bad thresholds are rejected") {
    Trajectory one;
    one.samples.resize(1);
    REQUIRE_THROWS_AS(binarize_deltas(one, 0.5), TooShortError);
    Trajectory two;
    two.samples.resize(2);
    two.samples[1].t = kDt;
    REQUIRE_THROWS_AS(binarize_deltas(two, 0.0), RangeError);
  }
}
