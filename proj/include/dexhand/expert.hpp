#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dexhand/common.hpp"
#include "dexhand/scene.hpp"

namespace dexhand {

/// The expert keeps commanding a joint until measured angle is within this of target, deg.
inline constexpr double kExpertToleranceDeg = 0.75;

inline constexpr int kGraspScriptVersion = 1;

/// One closure goal: drive `joint` to `target_deg` (by 1-degree command bits).
struct ScriptEntry {
  int joint = 0;
  double target_deg = 0.0;

  bool operator==(const ScriptEntry&) const = default;
};

/// Ordered closure goals for one task.
struct GraspScript {
  std::vector<ScriptEntry> entries;

  bool operator==(const GraspScript&) const = default;
};

using GraspScriptTable = std::map<TaskKind, GraspScript>;

namespace detail {

inline GraspScript uniform_script(int joint_within_finger, double target_deg) {
  GraspScript s;
  for (int f = 0; f < kNumFingers; ++f)
    s.entries.push_back({joint_index(f, joint_within_finger), target_deg});
  return s;
}

inline void append(GraspScript& s, const GraspScript& tail) {
  s.entries.insert(s.entries.end(), tail.entries.begin(), tail.entries.end());
}

}  // namespace detail

/**
 * @brief Built-in closure scripts, one per task.
 *
 * Grasps close all MCP pitch joints then all PIP joints; the rotate task
 * follows its pitch curl with MCP rolls on alternating fingers; the faucet
 * task grasps lightly then rolls the outer fingers to unscrew. Targets stay
 * well under the plant's 45 degree full-command equilibrium so the expert's
 * stop rule settles the joint near its target.
 */
inline const GraspScriptTable& default_grasp_scripts() {
  static const GraspScriptTable table = [] {
    GraspScriptTable t;
    {
      GraspScript s = detail::uniform_script(1, 18.0);
      detail::append(s, detail::uniform_script(2, 14.0));
      t[TaskKind::kFoamGrasp] = s;
    }
    {
      GraspScript s = detail::uniform_script(1, 22.0);
      detail::append(s, detail::uniform_script(2, 10.0));
      t[TaskKind::kCupGrasp] = s;
    }
    {
      GraspScript s = detail::uniform_script(1, 14.0);
      detail::append(s, detail::uniform_script(2, 18.0));
      t[TaskKind::kWireballGrasp] = s;
    }
    {
      GraspScript s = detail::uniform_script(1, 15.0);
      for (int f : {0, 2, 4}) s.entries.push_back({joint_index(f, 0), 28.0});
      t[TaskKind::kFoamRotate] = s;
    }
    {
      GraspScript s = detail::uniform_script(1, 16.0);
      detail::append(s, detail::uniform_script(2, 8.0));
      s.entries.push_back({joint_index(0, 0), 20.0});
      s.entries.push_back({joint_index(4, 0), 20.0});
      t[TaskKind::kFaucetGraspUnscrew] = s;
    }
    return t;
  }();
  return table;
}

inline nlohmann::json grasp_scripts_to_json(const GraspScriptTable& table) {
  nlohmann::json tasks = nlohmann::json::object();
  for (const auto& [kind, script] : table) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : script.entries)
      entries.push_back({{"joint", e.joint}, {"target_deg", e.target_deg}});
    tasks[task_name(kind)] = entries;
  }
  return {{"version", kGraspScriptVersion}, {"tasks", tasks}};
}

inline GraspScriptTable grasp_scripts_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kGraspScriptVersion)
    throw ParseError(1, "grasp scripts: unsupported version");
  GraspScriptTable table;
  for (const auto& [name, entries] : j.at("tasks").items()) {
    GraspScript script;
    for (const auto& e : entries) {
      ScriptEntry entry{e.at("joint").get<int>(), e.at("target_deg").get<double>()};
      if (entry.joint < 0 || entry.joint >= kNumJoints)
        throw DomainError("grasp scripts: joint index out of range");
      script.entries.push_back(entry);
    }
    table[task_from_name(name)] = script;
  }
  return table;
}

inline GraspScriptTable load_grasp_scripts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grasp scripts: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("grasp scripts: ") + e.what());
  }
  return grasp_scripts_from_json(j);
}

/**
 * @brief Stateless demonstrator: hold while approaching, close every grasp
 * entry together at contact, then turn every roll entry together once the
 * grasp is in place.
 *
 * Emits all zeros while the hand is farther than the contact threshold.
 * A bit stays set while its entry's measured angle is short of target by
 * more than the stop tolerance; roll entries stay quiet until every
 * non-roll entry is within the stop tolerance.
 *
 * @throws UnknownTaskError if the scene's task has no script.
 */
inline Command15 scripted_expert(const SceneSpec& scene, const GuideState& guide,
                                 const HandState& hand,
                                 const GraspScriptTable& table = default_grasp_scripts()) {
  Command15 cmd{};
  auto it = table.find(scene.kind);
  if (it == table.end()) throw UnknownTaskError("no grasp script for task: " + task_name(scene.kind));
  if (detail::object_distance(scene, guide) > kContactThresholdMm) return cmd;
  const auto& entries = it->second.entries;
  bool grasp_ready = true;
  for (const auto& entry : entries)
    if (!is_roll_joint(entry.joint) &&
        hand.angles[entry.joint] < entry.target_deg - kExpertToleranceDeg)
      grasp_ready = false;
  for (const auto& entry : entries) {
    if (is_roll_joint(entry.joint) && !grasp_ready) continue;
    if (hand.angles[entry.joint] < entry.target_deg - kExpertToleranceDeg) cmd[entry.joint] = 1;
  }
  return cmd;
}

}  // namespace dexhand
