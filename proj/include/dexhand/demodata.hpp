#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dexhand/common.hpp"
#include "dexhand/control.hpp"
#include "dexhand/image.hpp"
#include "dexhand/scene.hpp"
#include "dexhand/task.hpp"

namespace dexhand {

/**
 * @brief Where a frame's camera image comes from: a file on disk or the
 * synthetic-scene parameters to re-render it from.
 *
 * Parameter-embedded refs keep recordings self-contained and cheap to write;
 * the dataset builder re-renders them deterministically.
 */
struct ImageRef {
  enum class Kind { kPath, kScene };
  Kind kind = Kind::kScene;
  std::string path;
  SceneSpec scene;
  double guide_z = 0.0;
  Angles15 render_angles{};

  bool operator==(const ImageRef&) const = default;
};

struct DemoFrame {
  double t = 0.0;      // s
  Angles15 angles{};   // recorded setpoints, deg
  std::optional<ImageRef> image;

  bool operator==(const DemoFrame&) const = default;
};

struct DemoMeta {
  std::string task;
  double rate_hz = 30.0;
  std::string created;

  bool operator==(const DemoMeta&) const = default;
};

struct DemoRecording {
  DemoMeta meta;
  std::vector<DemoFrame> frames;

  void validate() const {
    for (std::size_t k = 0; k < frames.size(); ++k) {
      if (!(frames[k].t >= 0.0)) throw DomainError("recording: frame times must be non-negative");
      if (k > 0 && !(frames[k].t > frames[k - 1].t))
        throw DomainError("recording: frame times must be strictly increasing");
      for (double a : frames[k].angles)
        if (!std::isfinite(a)) throw DomainError("recording: angles must be finite");
    }
  }

  bool operator==(const DemoRecording&) const = default;
};

namespace detail {

inline nlohmann::json image_ref_to_json(const ImageRef& ref) {
  if (ref.kind == ImageRef::Kind::kPath) return ref.path;
  return {{"scene", scene_to_json(ref.scene)},
          {"guide_z", ref.guide_z},
          {"angles", ref.render_angles}};
}

inline ImageRef image_ref_from_json(const nlohmann::json& j) {
  ImageRef ref;
  if (j.is_string()) {
    ref.kind = ImageRef::Kind::kPath;
    ref.path = j.get<std::string>();
    return ref;
  }
  ref.kind = ImageRef::Kind::kScene;
  ref.scene = scene_from_json(j.at("scene"));
  ref.guide_z = j.at("guide_z").get<double>();
  const auto& arr = j.at("angles");
  if (!arr.is_array() || arr.size() != kNumJoints)
    throw DomainError("image ref: `angles` must hold 15 numbers");
  for (int i = 0; i < kNumJoints; ++i) ref.render_angles[i] = arr[i].get<double>();
  return ref;
}

}  // namespace detail

/**
 * @brief JSONL writer: metadata object on line 1, then one frame per line
 * with keys `t`, `angles` and optional `image`. Doubles round-trip exactly.
 */
inline void write_recording(const DemoRecording& rec, std::ostream& out) {
  rec.validate();
  out << nlohmann::json{{"task", rec.meta.task},
                        {"rate_hz", rec.meta.rate_hz},
                        {"created", rec.meta.created}}
             .dump()
      << "\n";
  for (const auto& frame : rec.frames) {
    nlohmann::json j{{"t", frame.t}, {"angles", frame.angles}};
    if (frame.image) j["image"] = detail::image_ref_to_json(*frame.image);
    out << j.dump() << "\n";
  }
}

inline void write_recording(const DemoRecording& rec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_recording: cannot open " + path);
  write_recording(rec, out);
  out.flush();
  if (!out) throw IoError("write_recording: write failed for " + path);
}

/**
 * @brief JSONL reader, inverse of write_recording.
 *
 * @throws ParseError citing the 1-based line number of any malformed line;
 *         IoError if the stream has no metadata line at all.
 */
inline DemoRecording read_recording(std::istream& in) {
  DemoRecording rec;
  std::string line;
  int lineno = 0;
  bool have_meta = false;
  double prev_t = -1.0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
    try {
      if (!have_meta) {
        rec.meta.task = j.value("task", std::string{});
        rec.meta.rate_hz = j.value("rate_hz", 30.0);
        rec.meta.created = j.value("created", std::string{});
        have_meta = true;
        continue;
      }
      DemoFrame frame;
      frame.t = j.at("t").get<double>();
      const auto& arr = j.at("angles");
      if (!arr.is_array() || arr.size() != kNumJoints)
        throw DomainError("`angles` must hold 15 numbers");
      for (int i = 0; i < kNumJoints; ++i) frame.angles[i] = arr[i].get<double>();
      if (j.contains("image")) frame.image = detail::image_ref_from_json(j.at("image"));
      if (!(frame.t >= 0.0)) throw DomainError("frame times must be non-negative");
      if (frame.t <= prev_t) throw DomainError("frame times must be strictly increasing");
      prev_t = frame.t;
      rec.frames.push_back(std::move(frame));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  if (!have_meta) throw IoError("read_recording: missing metadata line");
  rec.validate();
  return rec;
}

inline DemoRecording read_recording(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_recording: cannot open " + path);
  return read_recording(in);
}

/// Preprocessed images paired with the command bits that followed them.
struct Dataset {
  std::vector<Image> inputs;
  std::vector<Command15> labels;

  std::size_t size() const { return inputs.size(); }
};

/// Materialize a frame's image from its ref (render or load from disk).
inline Image resolve_image_ref(const ImageRef& ref) {
  if (ref.kind == ImageRef::Kind::kPath) return read_ppm(ref.path);
  HandState hand;
  hand.angles = ref.render_angles;
  return render_scene(ref.scene, GuideState{ref.guide_z}, hand);
}

/**
 * @brief Pair each frame's preprocessed image with the binarized joint deltas
 * of the following transition. Yields sum(frames - 1) samples.
 *
 * @throws TooShortError for recordings under 2 frames; MissingImageError if
 *         a paired frame lacks an image ref.
 */
inline Dataset build_dataset(const std::vector<DemoRecording>& recordings,
                             const PreprocessConfig& cfg,
                             double threshold_deg = kBinarizeThresholdDeg) {
  cfg.validate();
  Dataset ds;
  for (const auto& rec : recordings) {
    if (rec.frames.size() < 2) throw TooShortError("build_dataset: recording has fewer than 2 frames");
    Trajectory traj;
    traj.samples.reserve(rec.frames.size());
    for (const auto& f : rec.frames) traj.samples.push_back({f.t, f.angles});
    std::vector<Command15> labels = binarize_deltas(traj, threshold_deg);
    for (std::size_t k = 0; k + 1 < rec.frames.size(); ++k) {
      if (!rec.frames[k].image)
        throw MissingImageError("build_dataset: frame " + std::to_string(k) + " has no image");
      ds.inputs.push_back(preprocess_image(resolve_image_ref(*rec.frames[k].image), cfg));
      ds.labels.push_back(labels[k]);
    }
  }
  return ds;
}

/// Fingerprint of the knobs that shape dataset contents.
inline std::uint64_t preprocess_config_hash(const PreprocessConfig& cfg, double threshold_deg) {
  nlohmann::json j{{"to_yuv", cfg.to_yuv},
                   {"blur_sigma", cfg.blur_sigma},
                   {"normalize", cfg.normalize},
                   {"luminance_range", cfg.luminance_range},
                   {"threshold_deg", threshold_deg}};
  return fnv1a64(j.dump());
}

namespace detail {

template <class T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace detail

inline constexpr char kDatasetMagic[4] = {'D', 'X', 'D', 'S'};
inline constexpr std::uint32_t kDatasetVersion = 1;

/**
 * @brief Binary dataset dump: magic, version, count, shape, then per sample
 * the image quantized to bytes plus the 15 label bits. A JSON manifest with
 * the sample count and config hash goes to path + ".manifest.json".
 */
inline void write_dataset(const Dataset& ds, const PreprocessConfig& cfg, double threshold_deg,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_dataset: cannot open " + path);
  out.write(kDatasetMagic, 4);
  detail::write_raw(out, kDatasetVersion);
  detail::write_raw(out, static_cast<std::uint32_t>(ds.size()));
  const int rows = ds.inputs.empty() ? kImageRows : ds.inputs[0].rows;
  const int cols = ds.inputs.empty() ? kImageCols : ds.inputs[0].cols;
  detail::write_raw(out, static_cast<std::uint16_t>(rows));
  detail::write_raw(out, static_cast<std::uint16_t>(cols));
  detail::write_raw(out, static_cast<std::uint16_t>(kImageChannels));
  std::vector<unsigned char> buf;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const Image& img = ds.inputs[n];
    if (img.rows != rows || img.cols != cols || img.channels != kImageChannels)
      throw ShapeError("write_dataset: inconsistent image shapes");
    buf.resize(img.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
      buf[i] = static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    out.write(reinterpret_cast<const char*>(ds.labels[n].data()), kNumJoints);
  }
  out.flush();
  if (!out) throw IoError("write_dataset: write failed for " + path);

  nlohmann::json manifest{{"samples", ds.size()},
                          {"rows", rows},
                          {"cols", cols},
                          {"channels", kImageChannels},
                          {"config_hash", preprocess_config_hash(cfg, threshold_deg)},
                          {"threshold_deg", threshold_deg}};
  std::ofstream mout(path + ".manifest.json", std::ios::binary);
  if (!mout) throw IoError("write_dataset: cannot open manifest for " + path);
  mout << manifest.dump(2) << "\n";
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_dataset: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != std::string_view(kDatasetMagic, 4))
    throw ParseError(1, "read_dataset: bad magic in " + path);
  if (detail::read_raw<std::uint32_t>(in) != kDatasetVersion)
    throw ParseError(1, "read_dataset: unsupported version in " + path);
  const auto count = detail::read_raw<std::uint32_t>(in);
  const int rows = detail::read_raw<std::uint16_t>(in);
  const int cols = detail::read_raw<std::uint16_t>(in);
  const int channels = detail::read_raw<std::uint16_t>(in);
  if (channels != kImageChannels) throw ParseError(1, "read_dataset: unsupported channel count");
  Dataset ds;
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols * channels);
  for (std::uint32_t n = 0; n < count; ++n) {
    Image img = Image::zeros(rows, cols);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    Command15 label{};
    in.read(reinterpret_cast<char*>(label.data()), kNumJoints);
    if (!in) throw ParseError(1, "read_dataset: truncated sample data in " + path);
    for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / 255.0f;
    ds.inputs.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

/**
 * @brief Run a policy closed-loop and capture the demonstration.
 *
 * Frames store the pre-command setpoints as `angles` (so binarize_deltas
 * recovers the command bits exactly) and embed the scene parameters needed
 * to re-render each camera frame.
 */
inline std::pair<DemoRecording, TaskResult> record_demo(
    const SceneSpec& scene, TaskPolicy& policy,
    const std::array<MotorJointPlant, kNumJoints>& plants, const PidGains& gains,
    const RunConfig& cfg, const GraspScriptTable& table = default_grasp_scripts(),
    const std::string& created = "") {
  DemoRecording rec;
  rec.meta.task = task_name(scene.kind);
  rec.meta.rate_hz = cfg.rate_hz;
  rec.meta.created = created;
  StepObserver observer = [&](const StepSnapshot& snap) {
    DemoFrame frame;
    frame.t = snap.t;
    frame.angles = snap.q_d;
    frame.image = ImageRef{ImageRef::Kind::kScene, "", scene, snap.guide.z, snap.q_m};
    rec.frames.push_back(std::move(frame));
  };
  TaskResult result = run_task(scene, policy, plants, gains, cfg, table, observer);
  return {std::move(rec), std::move(result)};
}

}  // namespace dexhand
