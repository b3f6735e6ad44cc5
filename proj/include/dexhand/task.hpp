#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "dexhand/common.hpp"
#include "dexhand/control.hpp"
#include "dexhand/expert.hpp"
#include "dexhand/image.hpp"
#include "dexhand/plant.hpp"
#include "dexhand/rng.hpp"
#include "dexhand/scene.hpp"

namespace dexhand {

/// Measured angle must land within this of the script target for a grasp, deg.
inline constexpr double kGraspToleranceDeg = 2.0;

/// Slack allowed on cumulative commanded rotation for rotate/unscrew goals, deg.
inline constexpr double kCountToleranceDeg = 2.0;

/// A policy queried once per control step. Implementations that only need
/// proprioception (the scripted expert) skip rendering via needs_image.
struct TaskPolicy {
  virtual ~TaskPolicy() = default;
  virtual bool needs_image() const = 0;
  virtual Command15 act(const Image* image, const SceneSpec& scene, const GuideState& guide,
                        const HandState& hand) = 0;
};

struct ScriptedExpertPolicy final : TaskPolicy {
  GraspScriptTable table = default_grasp_scripts();

  bool needs_image() const override { return false; }
  Command15 act(const Image*, const SceneSpec& scene, const GuideState& guide,
                const HandState& hand) override {
    return scripted_expert(scene, guide, hand, table);
  }
};

/**
 * @brief Task completion bookkeeping.
 *
 * Grasp tasks succeed when every script entry's measured angle is within the
 * grasp tolerance simultaneously. The rotate task requires each entry's
 * cumulative commanded degrees to reach its target. The faucet task is
 * sequenced: its pitch/PIP entries form the grasp sub-task, and roll
 * commands only count toward the unscrew sub-task while that grasp predicate
 * currently holds.
 */
class SuccessTracker {
 public:
  SuccessTracker(TaskKind kind, const GraspScript& script) : kind_(kind), script_(script) {
    counts_.assign(script.entries.size(), 0.0);
  }

  /// Credit rotation progress from this step's command bits.
  void on_command(const Command15& cmd) {
    if (kind_ == TaskKind::kFoamRotate) {
      credit_incomplete(cmd, [](const ScriptEntry&) { return true; });
    } else if (kind_ == TaskKind::kFaucetGraspUnscrew && grasp_hold_) {
      credit_incomplete(cmd, [](const ScriptEntry& e) { return is_roll_joint(e.joint); });
    }
  }

  /// Re-evaluate measured-angle predicates after the plants moved.
  void on_state(const Angles15& measured) {
    auto within = [&](const ScriptEntry& e) {
      return std::abs(measured[e.joint] - e.target_deg) <= kGraspToleranceDeg;
    };
    switch (kind_) {
      case TaskKind::kFoamGrasp:
      case TaskKind::kCupGrasp:
      case TaskKind::kWireballGrasp:
        success_ = success_ || std::all_of(script_.entries.begin(), script_.entries.end(), within);
        break;
      case TaskKind::kFoamRotate:
        success_ = counts_complete([](const ScriptEntry&) { return true; });
        break;
      case TaskKind::kFaucetGraspUnscrew: {
        grasp_hold_ = true;
        for (const auto& e : script_.entries)
          if (!is_roll_joint(e.joint)) grasp_hold_ = grasp_hold_ && within(e);
        grasp_latched_ = grasp_latched_ || grasp_hold_;
        success_ = grasp_latched_ &&
                   counts_complete([](const ScriptEntry& e) { return is_roll_joint(e.joint); });
        break;
      }
    }
  }

  bool success() const { return success_; }
  bool grasp_held() const { return grasp_hold_; }

 private:
  template <class Pred>
  void credit_incomplete(const Command15& cmd, Pred tracked) {
    for (std::size_t i = 0; i < script_.entries.size(); ++i) {
      const auto& e = script_.entries[i];
      if (!tracked(e)) continue;
      if (counts_[i] >= e.target_deg - kCountToleranceDeg) continue;
      if (cmd[e.joint]) counts_[i] += 1.0;
    }
  }

  template <class Pred>
  bool counts_complete(Pred tracked) const {
    for (std::size_t i = 0; i < script_.entries.size(); ++i) {
      const auto& e = script_.entries[i];
      if (tracked(e) && counts_[i] < e.target_deg - kCountToleranceDeg) return false;
    }
    return true;
  }

  TaskKind kind_;
  GraspScript script_;
  std::vector<double> counts_;
  bool grasp_hold_ = false;
  bool grasp_latched_ = false;
  bool success_ = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int max_steps = 600;
  double rate_hz = 30.0;
  double descent_mm_per_step = 3.5;
  int settle_steps = 12;  // extra steps recorded after success
};

struct TaskResult {
  bool success = false;
  int steps = 0;
  ReplayLog log;
};

/// Everything a per-step observer may record. `image` is null unless the
/// policy asked for rendering. `q_d` holds the setpoints before this step's
/// command bits were applied, so consecutive snapshots difference back into
/// exactly the commands.
struct StepSnapshot {
  int step = 0;
  double t = 0.0;
  const Image* image = nullptr;
  GuideState guide;
  Angles15 q_d{};
  Angles15 q_m{};
  Command15 command{};
};

using StepObserver = std::function<void(const StepSnapshot&)>;

/**
 * @brief Closed-loop episode: descend the guide, query the policy each frame,
 * turn command bits into 1-degree setpoint increments, and run PID + plants.
 *
 * The guide starts where the object enters the camera's view window and
 * descends in fixed steps until within the contact threshold, so the final
 * step lands visibly past it. The seed jitters the initial joint angles
 * within 1.5 degrees. Runs until the task predicate
 * succeeds (plus settle steps) or max_steps elapse. Deterministic given
 * (scene, policy, config).
 */
inline TaskResult run_task(const SceneSpec& scene, TaskPolicy& policy,
                           const std::array<MotorJointPlant, kNumJoints>& plants,
                           const PidGains& gains, const RunConfig& cfg,
                           const GraspScriptTable& table = default_grasp_scripts(),
                           const StepObserver& observer = nullptr) {
  scene.validate();
  if (cfg.max_steps <= 0) throw RangeError("run_task: max_steps must be positive");
  auto it = table.find(scene.kind);
  if (it == table.end()) throw UnknownTaskError("no grasp script for task: " + task_name(scene.kind));

  const double dt = 1.0 / cfg.rate_hz;
  GuideState guide{std::min(kGuideTravelMm, scene.object_height_mm + kViewWindowMm)};
  HandState hand;
  SplitMix64 rng(cfg.seed);
  for (int i = 0; i < kNumJoints; ++i) hand.angles[i] = 1.5 * rng.uniform_at(i);

  Angles15 q_d = hand.angles;
  PidState pid_state;
  SuccessTracker tracker(scene.kind, it->second);
  TaskResult result;
  int remaining_settle = -1;

  for (int step = 0; step < cfg.max_steps; ++step) {
    const double t = step * dt;
    Image frame;
    const Image* frame_ptr = nullptr;
    if (policy.needs_image()) {
      frame = render_scene(scene, guide, hand);
      frame_ptr = &frame;
    }
    Command15 cmd = policy.act(frame_ptr, scene, guide, hand);

    if (observer) observer(StepSnapshot{step, t, frame_ptr, guide, q_d, hand.angles, cmd});

    tracker.on_command(cmd);
    for (int i = 0; i < kNumJoints; ++i)
      if (cmd[i]) q_d[i] = std::min(q_d[i] + 1.0, plants[i].limits[1]);

    PidOutput out = pid_step(gains, pid_state, q_d, hand.angles, dt);
    pid_state = out.state;
    for (int i = 0; i < kNumJoints; ++i) {
      PlantStep ps = plant_step(plants[i], hand.angles[i], pid_command(out.q_r[i]), dt);
      hand.angles[i] = ps.angle;
      result.log.rows.push_back({t, i, q_d[i], ps.angle, out.q_r[i], ps.clamped});
    }
    tracker.on_state(hand.angles);

    const double d = detail::object_distance(scene, guide);
    for (int f = 0; f < kNumFingers; ++f)
      hand.contact[f] = d <= kContactThresholdMm && hand.angles[joint_index(f, 1)] > 5.0;
    if (d > kContactThresholdMm) guide.z = std::max(0.0, guide.z - cfg.descent_mm_per_step);

    result.steps = step + 1;
    if (tracker.success() && remaining_settle < 0) remaining_settle = cfg.settle_steps;
    if (remaining_settle >= 0 && remaining_settle-- == 0) break;
  }
  result.success = tracker.success();
  return result;
}

}  // namespace dexhand
