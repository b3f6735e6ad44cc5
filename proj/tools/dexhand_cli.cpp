// Command-line front end: kinematics queries, workspace export, trajectory
// replay, dataset building, behavior-cloning training and closed-loop
// evaluation. Angles are degrees at this boundary; exit codes are 0 on
// success, 1 on runtime failure, 2 on usage errors.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dexhand/dexhand.hpp"

namespace {

using namespace dexhand;

std::uint64_t resolve_seed(bool flag_given, std::uint64_t flag_value, std::uint64_t fallback) {
  if (flag_given) return flag_value;
  if (const char* env = std::getenv("DEXHAND_SEED")) {
    char* end = nullptr;
    const std::uint64_t v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw RangeError("DEXHAND_SEED is not an unsigned integer: " + std::string(env));
    return v;
  }
  return fallback;
}

std::vector<double> parse_angle_list(const std::string& csv, std::size_t expected) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    out.push_back(std::stod(item, &used));
    if (used != item.size()) throw RangeError("bad angle value: " + item);
  }
  if (out.size() != expected)
    throw RangeError("expected " + std::to_string(expected) + " comma-separated angles");
  return out;
}

FingerModel model_for(const AppConfig& cfg) {
  return cfg.finger_model.empty() ? default_finger_model() : load_finger_model(cfg.finger_model);
}

GraspScriptTable scripts_for(const AppConfig& cfg) {
  return cfg.grasp_scripts.empty() ? default_grasp_scripts() : load_grasp_scripts(cfg.grasp_scripts);
}

Trajectory trajectory_from_recording(const DemoRecording& rec) {
  Trajectory traj;
  traj.samples.reserve(rec.frames.size());
  for (const auto& f : rec.frames) traj.samples.push_back({f.t, f.angles});
  traj.validate();
  return traj;
}

/// Learned policy wrapper: preprocesses each rendered frame and thresholds
/// the network's 15 probabilities.
struct CnnTaskPolicy final : TaskPolicy {
  CnnModel model;
  PreprocessConfig preprocess;

  bool needs_image() const override { return true; }
  Command15 act(const Image* image, const SceneSpec&, const GuideState&,
                const HandState&) override {
    if (!image) throw MissingImageError("policy requires a rendered frame");
    return predict_commands(model, preprocess_image(*image, preprocess));
  }
};

SceneSpec scene_for_task(TaskKind kind, std::uint64_t background_seed) {
  SceneSpec scene;
  scene.kind = kind;
  scene.background_seed = background_seed;
  return scene;
}

std::vector<DemoRecording> load_recordings(const std::vector<std::string>& paths) {
  std::vector<DemoRecording> recs;
  recs.reserve(paths.size());
  for (const auto& p : paths) recs.push_back(read_recording(p));
  return recs;
}

Dataset dataset_from_flags(const AppConfig& cfg, const std::string& dataset_path,
                           const std::vector<std::string>& recording_paths) {
  if (!dataset_path.empty()) return read_dataset(dataset_path);
  if (recording_paths.empty()) throw IoError("no --dataset or --recordings given");
  return build_dataset(load_recordings(recording_paths), cfg.preprocess,
                       cfg.binarize_threshold_deg);
}

int run_eval_task(const AppConfig& cfg, const GraspScriptTable& table, CnnTaskPolicy& policy,
                  TaskKind kind, int episodes, std::uint64_t seed_base) {
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    SceneSpec scene = scene_for_task(kind, seed_base + e);
    RunConfig run = cfg.run;
    run.seed = seed_base + e;
    TaskResult result = run_task(scene, policy, cfg.make_plants(), cfg.pid, run, table);
    successes += result.success ? 1 : 0;
  }
  std::printf("%s %d/%d\n", task_name(kind).c_str(), successes, episodes);
  return successes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tendon-coupled five-finger hand toolkit"};
  app.require_subcommand(0, 1);

  std::string config_path;
  bool print_config = false;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_flag("--print-config", print_config, "Echo the effective configuration and exit");

  // fk
  auto* fk = app.add_subcommand("fk", "Fingertip position from three joint angles (deg)");
  std::string fk_angles;
  fk->add_option("--angles", fk_angles, "MCP-roll,MCP-pitch,PIP in degrees")->required();

  // couple
  auto* couple = app.add_subcommand("couple", "Coupled DIP angle for a PIP angle (deg)");
  double couple_theta3 = 0.0;
  bool couple_check = false;
  couple->add_option("--theta3", couple_theta3, "PIP angle in degrees")->required();
  couple->add_flag("--check", couple_check, "Also print the bisection oracle value and the gap");

  // workspace
  auto* ws = app.add_subcommand("workspace", "Monte Carlo reachable-point cloud export");
  std::size_t ws_samples = 100000;
  std::uint64_t ws_seed = 0;
  bool ws_seed_given = false;
  double ws_voxel = 2.0;
  std::string ws_out, ws_format = "csv";
  ws->add_option("--samples", ws_samples, "Number of random poses");
  ws->add_option("--seed", ws_seed, "Generator seed")->each([&](const std::string&) {
    ws_seed_given = true;
  });
  ws->add_option("--voxel", ws_voxel, "Voxel edge for the volume estimate, mm");
  ws->add_option("--out", ws_out, "Output file")->required();
  ws->add_option("--format", ws_format, "csv, ply or ppm-scatter");

  // replay
  auto* replay = app.add_subcommand("replay", "PID replay of a recorded setpoint sequence");
  std::string replay_rec, replay_out;
  replay->add_option("--recording", replay_rec, "Demonstration JSONL")->required();
  replay->add_option("--out", replay_out, "Replay log CSV")->required();

  // binarize
  auto* binz = app.add_subcommand("binarize", "Joint-delta command bits from a recording");
  std::string binz_rec, binz_out;
  double binz_threshold = kBinarizeThresholdDeg;
  binz->add_option("--recording", binz_rec, "Demonstration JSONL")->required();
  binz->add_option("--threshold", binz_threshold, "Delta threshold, deg");
  binz->add_option("--out", binz_out, "Command CSV (stdout if omitted)");

  // build-dataset
  auto* bd = app.add_subcommand("build-dataset", "Preprocessed image/label pairs from recordings");
  std::vector<std::string> bd_recordings;
  std::string bd_out;
  bd->add_option("--recordings", bd_recordings, "Demonstration JSONL files")
      ->required()
      ->delimiter(',');
  bd->add_option("--out", bd_out, "Dataset file (manifest JSON written alongside)")->required();

  // train
  auto* tr = app.add_subcommand("train", "Behavior-cloning training");
  std::string tr_dataset, tr_out;
  std::vector<std::string> tr_recordings;
  std::uint64_t tr_seed = 0;
  bool tr_seed_given = false;
  tr->add_option("--dataset", tr_dataset, "Dataset file from build-dataset");
  tr->add_option("--recordings", tr_recordings, "Demonstration JSONL files")->delimiter(',');
  tr->add_option("--out", tr_out, "Checkpoint path")->required();
  tr->add_option("--seed", tr_seed, "Training seed")->each([&](const std::string&) {
    tr_seed_given = true;
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Closed-loop success rate of a trained policy");
  std::string ev_model, ev_task = "all";
  int ev_episodes = 0;
  std::uint64_t ev_seed = 1;
  bool ev_seed_given = false;
  ev->add_option("--model", ev_model, "Checkpoint path")->required();
  ev->add_option("--task", ev_task, "Task name or `all`");
  ev->add_option("--episodes", ev_episodes, "Episodes per task (default from config)");
  ev->add_option("--seed", ev_seed, "Base episode seed")->each([&](const std::string&) {
    ev_seed_given = true;
  });

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run one closed-loop episode");
  std::string sim_task = "foam-grasp", sim_model, sim_record, sim_log;
  std::uint64_t sim_seed = 0;
  bool sim_seed_given = false;
  sim->add_option("--task", sim_task, "Task name");
  sim->add_option("--model", sim_model, "Checkpoint path (scripted expert if omitted)");
  sim->add_option("--record", sim_record, "Write the demonstration JSONL here");
  sim->add_option("--log", sim_log, "Write the step log CSV here");
  sim->add_option("--seed", sim_seed, "Episode seed")->each([&](const std::string&) {
    sim_seed_given = true;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    AppConfig cfg = config_path.empty() ? AppConfig{} : load_config(config_path);
    if (print_config) {
      std::cout << config_to_json(cfg).dump(2) << "\n";
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return 2;
    }

    if (fk->parsed()) {
      std::vector<double> deg = parse_angle_list(fk_angles, 3);
      Transform4 tip = forward_kinematics(model_for(cfg), deg_to_rad(deg[0]), deg_to_rad(deg[1]),
                                          deg_to_rad(deg[2]));
      std::printf("%.6f %.6f %.6f\n", tip.translation.x(), tip.translation.y(),
                  tip.translation.z());
      return 0;
    }

    if (couple->parsed()) {
      const CouplingGeometry geom = model_for(cfg).coupling;
      const double theta3 = deg_to_rad(couple_theta3);
      const double closed = coupled_dip_angle(geom, theta3);
      if (couple_check) {
        const double oracle = coupling_oracle(geom, theta3);
        std::printf("%.9f %.9f %.3e\n", rad_to_deg(closed), rad_to_deg(oracle),
                    std::abs(closed - oracle));
      } else {
        std::printf("%.6f\n", rad_to_deg(closed));
      }
      return 0;
    }

    if (ws->parsed()) {
      const std::uint64_t seed = resolve_seed(ws_seed_given, ws_seed, cfg.run.seed);
      WorkspaceCloud cloud = sample_workspace(model_for(cfg), ws_samples, seed);
      export_cloud(cloud, cloud_format_from_name(ws_format), ws_out);
      if (!cloud.points.empty()) {
        WorkspaceStats stats = estimate_volume(cloud, ws_voxel);
        std::printf("samples %zu volume_mm3 %.1f bbox [%.3f %.3f %.3f] [%.3f %.3f %.3f]\n",
                    cloud.points.size(), stats.volume_mm3, stats.bbox_min.x(), stats.bbox_min.y(),
                    stats.bbox_min.z(), stats.bbox_max.x(), stats.bbox_max.y(),
                    stats.bbox_max.z());
      } else {
        std::printf("samples 0\n");
      }
      return 0;
    }

    if (replay->parsed()) {
      DemoRecording rec = read_recording(replay_rec);
      Trajectory traj = trajectory_from_recording(rec);
      const double dt = rec.meta.rate_hz > 0.0 ? 1.0 / rec.meta.rate_hz : 1.0 / 30.0;
      ReplayLog log = replay_trajectory(traj, cfg.make_plants(), cfg.pid, dt);
      write_replay_csv(log, replay_out);
      std::printf("steps %zu\n", traj.samples.size());
      return 0;
    }

    if (binz->parsed()) {
      DemoRecording rec = read_recording(binz_rec);
      std::vector<Command15> cmds = binarize_deltas(trajectory_from_recording(rec), binz_threshold);
      std::ostringstream out;
      out << "c0,c1,c2,c3,c4,c5,c6,c7,c8,c9,c10,c11,c12,c13,c14\n";
      for (const auto& c : cmds) {
        for (int i = 0; i < kNumJoints; ++i) out << int(c[i]) << (i + 1 < kNumJoints ? "," : "\n");
      }
      if (binz_out.empty()) {
        std::cout << out.str();
      } else {
        std::ofstream f(binz_out, std::ios::binary);
        if (!f) throw IoError("cannot open " + binz_out);
        f << out.str();
      }
      return 0;
    }

    if (bd->parsed()) {
      Dataset ds = build_dataset(load_recordings(bd_recordings), cfg.preprocess,
                                 cfg.binarize_threshold_deg);
      write_dataset(ds, cfg.preprocess, cfg.binarize_threshold_deg, bd_out);
      std::printf("samples %zu\n", ds.size());
      return 0;
    }

    if (tr->parsed()) {
      Dataset ds = dataset_from_flags(cfg, tr_dataset, tr_recordings);
      TrainConfig tc = cfg.train;
      tc.seed = resolve_seed(tr_seed_given, tr_seed, tc.seed);
      auto [model, report] = train(ds, tc);
      save_checkpoint(model, tr_out,
                      {{"train_config", tc.to_json()},
                       {"config_hash", report.config_hash},
                       {"final_loss", report.epoch_loss.back()},
                       {"train_accuracy", report.mean_accuracy}});
      std::printf("samples %zu final_loss %.6f accuracy %.4f\n", ds.size(),
                  report.epoch_loss.back(), report.mean_accuracy);
      return 0;
    }

    if (ev->parsed()) {
      CnnTaskPolicy policy;
      policy.model = load_checkpoint<float>(ev_model);
      policy.preprocess = cfg.preprocess;
      const GraspScriptTable table = scripts_for(cfg);
      const int episodes = ev_episodes > 0 ? ev_episodes : cfg.eval_runs;
      const std::uint64_t seed = resolve_seed(ev_seed_given, ev_seed, 1);
      std::vector<TaskKind> kinds;
      if (ev_task == "all")
        kinds.assign(kAllTasks.begin(), kAllTasks.end());
      else
        kinds.push_back(task_from_name(ev_task));
      int successes = 0, total = 0;
      for (TaskKind kind : kinds) {
        successes += run_eval_task(cfg, table, policy, kind, episodes, seed);
        total += episodes;
      }
      std::printf("mean %.4f\n", total > 0 ? double(successes) / total : 0.0);
      return 0;
    }

    if (sim->parsed()) {
      const std::uint64_t seed = resolve_seed(sim_seed_given, sim_seed, cfg.run.seed);
      SceneSpec scene = scene_for_task(task_from_name(sim_task), seed);
      RunConfig run = cfg.run;
      run.seed = seed;
      const GraspScriptTable table = scripts_for(cfg);

      ScriptedExpertPolicy expert;
      expert.table = table;
      CnnTaskPolicy learned;
      TaskPolicy* policy = &expert;
      if (!sim_model.empty()) {
        learned.model = load_checkpoint<float>(sim_model);
        learned.preprocess = cfg.preprocess;
        policy = &learned;
      }

      TaskResult result;
      if (!sim_record.empty()) {
        auto [rec, res] = record_demo(scene, *policy, cfg.make_plants(), cfg.pid, run, table);
        write_recording(rec, sim_record);
        result = std::move(res);
      } else {
        result = run_task(scene, *policy, cfg.make_plants(), cfg.pid, run, table);
      }
      if (!sim_log.empty()) write_replay_csv(result.log, sim_log);
      std::printf("success %d steps %d\n", result.success ? 1 : 0, result.steps);
      return 0;
    }

    std::cerr << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
