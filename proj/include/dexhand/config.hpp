#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dexhand/common.hpp"
#include "dexhand/control.hpp"
#include "dexhand/image.hpp"
#include "dexhand/plant.hpp"
#include "dexhand/policy.hpp"
#include "dexhand/task.hpp"

namespace dexhand {

/**
 * @brief Everything the command-line tool can be configured with, strict-parsed
 * from JSON. An empty document yields the documented defaults.
 */
struct AppConfig {
  std::string finger_model;   // optional path; empty uses the built-in model
  std::string grasp_scripts;  // optional path; empty uses the built-in table
  MotorJointPlant plant;
  PidGains pid;
  PreprocessConfig preprocess;
  TrainConfig train;
  RunConfig run;
  double binarize_threshold_deg = kBinarizeThresholdDeg;
  int eval_runs = 4;

  /// Per-joint plants with the configured motor/spring values.
  std::array<MotorJointPlant, kNumJoints> make_plants() const {
    auto plants = default_plants();
    for (auto& p : plants) {
      p.gain = plant.gain;
      p.spring_rate = plant.spring_rate;
      p.rest_angle = plant.rest_angle;
      p.validate();
    }
    return plants;
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& scope) {
  if (!j.is_object()) throw DomainError("config: " + scope + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.contains(key))
      throw UnknownKeyError("config: unknown key `" + scope + key + "`");
}

inline int line_of_offset(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

inline AppConfig config_from_json(const nlohmann::json& j) {
  AppConfig cfg;
  detail::reject_unknown_keys(
      j,
      {"finger_model", "grasp_scripts", "plant", "pid", "preprocess", "train", "run",
       "binarize_threshold_deg", "eval_runs"},
      "");
  cfg.finger_model = j.value("finger_model", std::string{});
  cfg.grasp_scripts = j.value("grasp_scripts", std::string{});

  if (j.contains("plant")) {
    const auto& p = j.at("plant");
    detail::reject_unknown_keys(p, {"gain", "spring_rate", "rest_angle"}, "plant.");
    cfg.plant.gain = p.value("gain", cfg.plant.gain);
    cfg.plant.spring_rate = p.value("spring_rate", cfg.plant.spring_rate);
    cfg.plant.rest_angle = p.value("rest_angle", cfg.plant.rest_angle);
  }
  if (j.contains("pid")) {
    const auto& p = j.at("pid");
    detail::reject_unknown_keys(p, {"kp", "ki", "kd"}, "pid.");
    if (p.contains("kp")) {
      if (p.at("kp").is_array()) {
        const auto& arr = p.at("kp");
        if (arr.size() != kNumJoints) throw DomainError("config: pid.kp array must hold 15 values");
        for (int i = 0; i < kNumJoints; ++i) cfg.pid.kp[i] = arr[i].get<double>();
      } else {
        cfg.pid.kp = make_angles(p.at("kp").get<double>());
      }
    }
    cfg.pid.ki = p.value("ki", cfg.pid.ki);
    cfg.pid.kd = p.value("kd", cfg.pid.kd);
    cfg.pid.validate();
  }
  if (j.contains("preprocess")) {
    const auto& p = j.at("preprocess");
    detail::reject_unknown_keys(p, {"to_yuv", "blur_sigma", "normalize", "luminance_range"},
                                "preprocess.");
    cfg.preprocess.to_yuv = p.value("to_yuv", cfg.preprocess.to_yuv);
    cfg.preprocess.blur_sigma = p.value("blur_sigma", cfg.preprocess.blur_sigma);
    cfg.preprocess.normalize = p.value("normalize", cfg.preprocess.normalize);
    if (p.contains("luminance_range")) {
      cfg.preprocess.luminance_range[0] = p.at("luminance_range").at(0).get<double>();
      cfg.preprocess.luminance_range[1] = p.at("luminance_range").at(1).get<double>();
    }
    cfg.preprocess.validate();
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown_keys(t,
                                {"lr", "beta1", "beta2", "eps", "batch_size", "epochs",
                                 "steps_per_epoch", "luminance_range", "seed", "conv_channels",
                                 "dense_widths"},
                                "train.");
    cfg.train.adam.lr = t.value("lr", cfg.train.adam.lr);
    cfg.train.adam.beta1 = t.value("beta1", cfg.train.adam.beta1);
    cfg.train.adam.beta2 = t.value("beta2", cfg.train.adam.beta2);
    cfg.train.adam.eps = t.value("eps", cfg.train.adam.eps);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.steps_per_epoch = t.value("steps_per_epoch", cfg.train.steps_per_epoch);
    cfg.train.seed = t.value("seed", cfg.train.seed);
    if (t.contains("luminance_range")) {
      cfg.train.luminance_range[0] = t.at("luminance_range").at(0).get<double>();
      cfg.train.luminance_range[1] = t.at("luminance_range").at(1).get<double>();
    }
    if (t.contains("conv_channels"))
      for (int l = 0; l < 3; ++l) cfg.train.conv_channels[l] = t.at("conv_channels").at(l).get<int>();
    if (t.contains("dense_widths"))
      for (int l = 0; l < 3; ++l) cfg.train.dense_widths[l] = t.at("dense_widths").at(l).get<int>();
    cfg.train.validate();
  }
  if (j.contains("run")) {
    const auto& r = j.at("run");
    detail::reject_unknown_keys(
        r, {"seed", "max_steps", "rate_hz", "descent_mm_per_step", "settle_steps"}, "run.");
    cfg.run.seed = r.value("seed", cfg.run.seed);
    cfg.run.max_steps = r.value("max_steps", cfg.run.max_steps);
    cfg.run.rate_hz = r.value("rate_hz", cfg.run.rate_hz);
    cfg.run.descent_mm_per_step = r.value("descent_mm_per_step", cfg.run.descent_mm_per_step);
    cfg.run.settle_steps = r.value("settle_steps", cfg.run.settle_steps);
  }
  cfg.binarize_threshold_deg = j.value("binarize_threshold_deg", cfg.binarize_threshold_deg);
  cfg.eval_runs = j.value("eval_runs", cfg.eval_runs);

  for (const std::string& path : {cfg.finger_model, cfg.grasp_scripts})
    if (!path.empty() && !std::filesystem::exists(path))
      throw IoError("config: referenced file does not exist: " + path);
  return cfg;
}

/**
 * @brief Strict JSON config loader.
 *
 * @throws IoError if unreadable; ParseError carrying the offending line;
 *         UnknownKeyError naming any unrecognized key.
 */
inline AppConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_config: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(detail::line_of_offset(text, e.byte), e.what());
  }
  return config_from_json(j);
}

/// Effective configuration echo with a stable key order.
inline nlohmann::ordered_json config_to_json(const AppConfig& cfg) {
  nlohmann::ordered_json j;
  j["finger_model"] = cfg.finger_model;
  j["grasp_scripts"] = cfg.grasp_scripts;
  j["plant"] = {{"gain", cfg.plant.gain},
                {"spring_rate", cfg.plant.spring_rate},
                {"rest_angle", cfg.plant.rest_angle}};
  j["pid"] = {{"kp", cfg.pid.kp}, {"ki", cfg.pid.ki}, {"kd", cfg.pid.kd}};
  j["preprocess"] = {{"to_yuv", cfg.preprocess.to_yuv},
                     {"blur_sigma", cfg.preprocess.blur_sigma},
                     {"normalize", cfg.preprocess.normalize},
                     {"luminance_range", cfg.preprocess.luminance_range}};
  j["train"] = nlohmann::ordered_json{{"lr", cfg.train.adam.lr},
                                      {"beta1", cfg.train.adam.beta1},
                                      {"beta2", cfg.train.adam.beta2},
                                      {"eps", cfg.train.adam.eps},
                                      {"batch_size", cfg.train.batch_size},
                                      {"epochs", cfg.train.epochs},
                                      {"steps_per_epoch", cfg.train.steps_per_epoch},
                                      {"luminance_range", cfg.train.luminance_range},
                                      {"seed", cfg.train.seed},
                                      {"conv_channels", cfg.train.conv_channels},
                                      {"dense_widths", cfg.train.dense_widths}};
  j["run"] = {{"seed", cfg.run.seed},
              {"max_steps", cfg.run.max_steps},
              {"rate_hz", cfg.run.rate_hz},
              {"descent_mm_per_step", cfg.run.descent_mm_per_step},
              {"settle_steps", cfg.run.settle_steps}};
  j["binarize_threshold_deg"] = cfg.binarize_threshold_deg;
  j["eval_runs"] = cfg.eval_runs;
  return j;
}

}  // namespace dexhand
