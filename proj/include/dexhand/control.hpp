#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "dexhand/common.hpp"
#include "dexhand/plant.hpp"

namespace dexhand {

/// Per-joint proportional gains with shared integral/derivative gains.
struct PidGains {
  Angles15 kp = make_angles(0.5);
  double ki = 0.1;
  double kd = 0.0;

  void validate() const {
    for (double g : kp)
      if (g < 0.0) throw DomainError("pid: kp must be non-negative");
    if (ki < 0.0 || kd < 0.0) throw DomainError("pid: ki and kd must be non-negative");
  }
};

struct PidState {
  Angles15 integral = make_angles(0.0);
  Angles15 prev_error = make_angles(0.0);

  void reset() {
    integral.fill(0.0);
    prev_error.fill(0.0);
  }
};

/// Anti-windup bound on the accumulated error, deg*s of loop steps.
inline constexpr double kIntegralClamp = 100.0;

struct PidOutput {
  Angles15 q_r{};
  PidState state;
};

/**
 * @brief One controller step for all 15 joints.
 *
 * e = q_m - q_d; the integral accumulates the current error before use and
 * is clamped to +/-100; q_r = kp*e + ki*integral + kd*(e - prev_error)/dt.
 * With this error sign the plant must be driven by -q_r (clipped to [-1, 1])
 * so that a measurement short of the setpoint pushes the joint forward.
 */
inline PidOutput pid_step(const PidGains& gains, const PidState& state, const Angles15& q_d,
                          const Angles15& q_m, double dt) {
  PidOutput out;
  out.state = state;
  for (int i = 0; i < kNumJoints; ++i) {
    const double e = q_m[i] - q_d[i];
    double acc = std::clamp(state.integral[i] + e, -kIntegralClamp, kIntegralClamp);
    out.q_r[i] = gains.kp[i] * e + gains.ki * acc + gains.kd * (e - state.prev_error[i]) / dt;
    out.state.integral[i] = acc;
    out.state.prev_error[i] = e;
  }
  return out;
}

/// Normalized motor command for one controller output.
inline double pid_command(double q_r) { return std::clamp(-q_r, -1.0, 1.0); }

/// Timestamped setpoint sequence for all 15 joints, degrees.
struct Trajectory {
  struct Sample {
    double t = 0.0;  // s
    Angles15 q_d{};
  };
  std::vector<Sample> samples;

  void validate() const {
    for (std::size_t k = 1; k < samples.size(); ++k)
      if (!(samples[k].t > samples[k - 1].t))
        throw DomainError("trajectory: timestamps must be strictly increasing");
  }
};

/**
 * @brief Mark joints that move by at least threshold_deg between frames.
 *
 * Output k covers the transition from sample k to k+1, so the result is one
 * shorter than the trajectory.
 *
 * @throws TooShortError for trajectories with fewer than 2 samples.
 */
inline std::vector<Command15> binarize_deltas(const Trajectory& traj, double threshold_deg) {
  if (traj.samples.size() < 2) throw TooShortError("binarize_deltas: need at least 2 samples");
  if (!(threshold_deg > 0.0)) throw RangeError("binarize_deltas: threshold must be positive");
  std::vector<Command15> commands(traj.samples.size() - 1);
  for (std::size_t k = 0; k + 1 < traj.samples.size(); ++k)
    for (int i = 0; i < kNumJoints; ++i) {
      double delta = traj.samples[k + 1].q_d[i] - traj.samples[k].q_d[i];
      commands[k][i] = std::abs(delta) >= threshold_deg ? 1 : 0;
    }
  return commands;
}

/// Default binarization threshold, half the 1 degree command quantum.
inline constexpr double kBinarizeThresholdDeg = 0.5;

struct ReplayLog {
  struct Row {
    double t = 0.0;
    int joint = 0;
    double q_d = 0.0;
    double q_m = 0.0;
    double q_r = 0.0;
    bool saturated = false;
  };
  std::vector<Row> rows;
};

/**
 * @brief Drive the plants through a recorded setpoint sequence.
 *
 * Each trajectory sample is one controller step: the PID sees the current
 * measured angles, its output (through pid_command) advances every plant by
 * dt. Logged q_m is the post-step measurement; `saturated` marks joints the
 * plant clamped at a limit during the step.
 */
inline ReplayLog replay_trajectory(const Trajectory& traj,
                                   const std::array<MotorJointPlant, kNumJoints>& plants,
                                   const PidGains& gains, double dt) {
  ReplayLog log;
  log.rows.reserve(traj.samples.size() * kNumJoints);
  PidState state;
  Angles15 q_m = make_angles(0.0);
  for (int i = 0; i < kNumJoints; ++i) q_m[i] = plants[i].rest_angle;
  for (const auto& sample : traj.samples) {
    PidOutput out = pid_step(gains, state, sample.q_d, q_m, dt);
    state = out.state;
    for (int i = 0; i < kNumJoints; ++i) {
      PlantStep step = plant_step(plants[i], q_m[i], pid_command(out.q_r[i]), dt);
      q_m[i] = step.angle;
      log.rows.push_back({sample.t, i, sample.q_d[i], q_m[i], out.q_r[i], step.clamped});
    }
  }
  return log;
}

inline void write_replay_csv(const ReplayLog& log, std::ostream& out) {
  out << "t,joint,q_d,q_m,q_r,saturated\n";
  char line[160];
  for (const auto& r : log.rows) {
    std::snprintf(line, sizeof(line), "%.6f,%d,%.6f,%.6f,%.6f,%d\n", r.t, r.joint, r.q_d, r.q_m,
                  r.q_r, r.saturated ? 1 : 0);
    out << line;
  }
}

inline void write_replay_csv(const ReplayLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("replay log: cannot open " + path);
  write_replay_csv(log, out);
  out.flush();
  if (!out) throw IoError("replay log: write failed for " + path);
}

}  // namespace dexhand
