#pragma once

#include <algorithm>
#include <array>

#include "dexhand/common.hpp"

namespace dexhand {

/**
 * @brief First-order joint plant: geared motor against a return spring.
 *
 * theta' = theta + dt * (gain * command - spring_rate * (theta - rest_angle)),
 * clamped to the joint limits. No inertia; the gearing and springs make
 * the real joint overdamped. Angles and limits in degrees, command in [-1, 1].
 */
struct MotorJointPlant {
  double gain = 90.0;         // deg/s at full command
  double spring_rate = 2.0;   // 1/s pull toward rest
  double rest_angle = 0.0;    // deg
  std::array<double, 2> limits{0.0, 90.0};  // deg

  void validate() const {
    if (!(gain > 0.0)) throw DomainError("plant: gain must be positive");
    if (spring_rate < 0.0) throw DomainError("plant: spring_rate must be non-negative");
    if (rest_angle < limits[0] || rest_angle > limits[1])
      throw DomainError("plant: rest_angle outside limits");
  }

  /// Steady-state angle held by a constant command (ignoring limits).
  double equilibrium(double command) const {
    return spring_rate > 0.0 ? rest_angle + gain * command / spring_rate : rest_angle;
  }
};

struct PlantStep {
  double angle = 0.0;   // deg
  bool clamped = false; // hit a joint limit this step
};

/// Advance the plant one step of dt seconds under a command in [-1, 1].
inline PlantStep plant_step(const MotorJointPlant& plant, double angle, double command, double dt) {
  double next = angle + dt * (plant.gain * command - plant.spring_rate * (angle - plant.rest_angle));
  double clamped = std::clamp(next, plant.limits[0], plant.limits[1]);
  return PlantStep{clamped, clamped != next};
}

/// One plant per joint of the hand, with roll joints allowed to swing negative.
inline std::array<MotorJointPlant, kNumJoints> default_plants() {
  std::array<MotorJointPlant, kNumJoints> plants;
  for (int i = 0; i < kNumJoints; ++i)
    if (is_roll_joint(i)) plants[i].limits = {-90.0, 90.0};
  return plants;
}

}  // namespace dexhand
