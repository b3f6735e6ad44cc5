#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "dexhand/common.hpp"
#include "dexhand/image.hpp"
#include "dexhand/kinematics.hpp"
#include "dexhand/rng.hpp"

namespace dexhand {

enum class TaskKind { kFoamGrasp, kCupGrasp, kWireballGrasp, kFoamRotate, kFaucetGraspUnscrew };

inline constexpr std::array<TaskKind, 5> kAllTasks{TaskKind::kFoamGrasp, TaskKind::kCupGrasp,
                                                   TaskKind::kWireballGrasp, TaskKind::kFoamRotate,
                                                   TaskKind::kFaucetGraspUnscrew};

inline std::string task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kFoamGrasp: return "foam-grasp";
    case TaskKind::kCupGrasp: return "cup-grasp";
    case TaskKind::kWireballGrasp: return "wireball-grasp";
    case TaskKind::kFoamRotate: return "foam-rotate";
    case TaskKind::kFaucetGraspUnscrew: return "faucet-grasp-unscrew";
  }
  throw UnknownTaskError("task_name: bad enum value");
}

inline TaskKind task_from_name(const std::string& name) {
  for (TaskKind kind : kAllTasks)
    if (task_name(kind) == name) return kind;
  throw UnknownTaskError("unknown task: " + name);
}

/// Travel of the vertical linear guide carrying the hand, mm.
inline constexpr double kGuideTravelMm = 450.0;

/// The camera sees the object once the hand is within this height of it, mm.
inline constexpr double kViewWindowMm = 100.0;

/// The hand counts as touching the object within this distance, mm.
inline constexpr double kContactThresholdMm = 5.0;

/// Vertical position of the hand along the guide, mm above the table.
struct GuideState {
  double z = kGuideTravelMm;

  void validate() const {
    if (z < 0.0 || z > kGuideTravelMm) throw RangeError("guide: z outside [0, 450] mm");
  }
};

/// What sits under the hand and how the backdrop looks.
struct SceneSpec {
  TaskKind kind = TaskKind::kFoamGrasp;
  double object_size_mm = 40.0;
  double object_height_mm = 80.0;
  std::uint64_t background_seed = 0;

  void validate() const {
    if (!(object_size_mm > 0.0)) throw DomainError("scene: object size must be positive");
    if (object_height_mm < 0.0 || object_height_mm > kGuideTravelMm)
      throw DomainError("scene: object height outside the guide travel");
  }

  bool operator==(const SceneSpec&) const = default;
};

inline nlohmann::json scene_to_json(const SceneSpec& s) {
  return {{"task", task_name(s.kind)},
          {"object_size_mm", s.object_size_mm},
          {"object_height_mm", s.object_height_mm},
          {"background_seed", s.background_seed}};
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.kind = task_from_name(j.at("task").get<std::string>());
  s.object_size_mm = j.value("object_size_mm", 40.0);
  s.object_height_mm = j.value("object_height_mm", 80.0);
  s.background_seed = j.value("background_seed", std::uint64_t{0});
  s.validate();
  return s;
}

/// Measured joint angles (degrees) plus per-fingertip contact flags.
struct HandState {
  Angles15 angles = make_angles(0.0);
  std::array<bool, kNumFingers> contact{};
};

namespace detail {

/// Hand height above the object top, mm, floored at touch.
inline double object_distance(const SceneSpec& scene, const GuideState& guide) {
  return std::max(0.0, guide.z - scene.object_height_mm);
}

/// Pixels per millimeter at the object plane for a hand-mounted camera.
inline double apparent_scale(double distance_mm) {
  constexpr double kFocalMm = 50.0;
  return 2.2 * kFocalMm / (distance_mm + kFocalMm);
}

inline void put_pixel(Image& img, int x, int y, float r, float g, float b) {
  if (x < 0 || x >= img.cols || y < 0 || y >= img.rows) return;
  img.at(y, x, 0) = r;
  img.at(y, x, 1) = g;
  img.at(y, x, 2) = b;
}

inline void fill_ellipse(Image& img, double cx, double cy, double rx, double ry, float r, float g,
                         float b) {
  int x0 = static_cast<int>(std::floor(cx - rx)), x1 = static_cast<int>(std::ceil(cx + rx));
  int y0 = static_cast<int>(std::floor(cy - ry)), y1 = static_cast<int>(std::ceil(cy + ry));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double nx = (x - cx) / rx, ny = (y - cy) / ry;
      if (nx * nx + ny * ny <= 1.0) put_pixel(img, x, y, r, g, b);
    }
}

inline void fill_rect(Image& img, double cx, double cy, double half_w, double half_h, float r,
                      float g, float b) {
  int x0 = static_cast<int>(std::lround(cx - half_w)), x1 = static_cast<int>(std::lround(cx + half_w));
  int y0 = static_cast<int>(std::lround(cy - half_h)), y1 = static_cast<int>(std::lround(cy + half_h));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) put_pixel(img, x, y, r, g, b);
}

inline void draw_segment(Image& img, double x0, double y0, double x1, double y1, double width,
                         float r, float g, float b) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int steps = std::max(1, static_cast<int>(std::ceil(len)));
  for (int s = 0; s <= steps; ++s) {
    double t = static_cast<double>(s) / steps;
    double x = x0 + t * (x1 - x0), y = y0 + t * (y1 - y0);
    fill_rect(img, x, y, width / 2.0, width / 2.0, r, g, b);
  }
}

/// Task object with manipulation feedback baked into the raster: `squash`
/// compresses the silhouette vertically as the measured grip tightens, and
/// `spin` rotates the object's bar or handle with the measured roll, the way
/// a real camera would see the object react.
inline void draw_object(Image& img, const SceneSpec& scene, double cx, double cy, double radius_px,
                        double squash, double spin) {
  const double ry = radius_px * squash;
  const double ca = std::cos(spin - kPi / 2.0), sa = std::sin(spin - kPi / 2.0);
  switch (scene.kind) {
    case TaskKind::kFoamGrasp:
      fill_ellipse(img, cx, cy, radius_px, ry, 0.95f, 0.55f, 0.15f);
      break;
    case TaskKind::kCupGrasp:
      fill_ellipse(img, cx, cy, radius_px, ry, 0.20f, 0.45f, 0.95f);
      fill_rect(img, cx + radius_px * 1.1, cy, radius_px * 0.25, ry * 0.5, 0.20f, 0.45f, 0.95f);
      break;
    case TaskKind::kWireballGrasp:
      fill_ellipse(img, cx, cy, radius_px, ry, 0.15f, 0.80f, 0.30f);
      fill_ellipse(img, cx, cy, radius_px * 0.66, ry * 0.66, 0.10f, 0.45f, 0.18f);
      fill_ellipse(img, cx, cy, radius_px * 0.33, ry * 0.33, 0.15f, 0.80f, 0.30f);
      break;
    case TaskKind::kFoamRotate: {
      fill_ellipse(img, cx, cy, radius_px, ry, 0.95f, 0.55f, 0.15f);
      const double bx = radius_px * 0.9 * sa, by = ry * 0.9 * ca;
      draw_segment(img, cx - bx, cy + by, cx + bx, cy - by, radius_px * 0.36, 0.98f, 0.95f, 0.90f);
      break;
    }
    case TaskKind::kFaucetGraspUnscrew: {
      const double hy = cy - ry * 0.6;
      const double bx = radius_px * sa, by = ry * 0.5 * ca;
      draw_segment(img, cx - bx, hy + by, cx + bx, hy - by, radius_px * 0.3, 0.90f, 0.15f, 0.15f);
      fill_rect(img, cx, cy + ry * 0.3, radius_px * 0.3, ry * 0.7, 0.90f, 0.15f, 0.15f);
      break;
    }
  }
}

}  // namespace detail

/**
 * @brief Deterministic synthetic camera frame, 160x320 RGB in [0, 1].
 *
 * The backdrop is seeded speckle. The object appears once the hand is within
 * the 100 mm view window, grows as the guide descends, flattens as the
 * measured grip curls around it, and its bar or handle turns with the
 * measured roll. A press shadow appears under the object while the hand is
 * within the contact threshold. Finger silhouettes are drawn from the
 * measured angles: each
 * finger is a three-segment polyline whose bend follows MCP pitch, PIP, and
 * the coupled DIP, with MCP roll as a lateral shift at the base.
 */
inline Image render_scene(const SceneSpec& scene, const GuideState& guide, const HandState& hand) {
  Image img = Image::zeros(kImageRows, kImageCols);
  SplitMix64 noise(scene.background_seed);

  for (int y = 0; y < kImageRows; ++y)
    for (int x = 0; x < kImageCols; ++x) {
      double u = noise.uniform_at(static_cast<std::uint64_t>(y) * kImageCols + x);
      float base = static_cast<float>(0.22 + 0.14 * u + 0.05 * y / kImageRows);
      img.at(y, x, 0) = base * 0.90f;
      img.at(y, x, 1) = base * 0.95f;
      img.at(y, x, 2) = std::min(1.0f, base * 1.10f);
    }

  const double d = detail::object_distance(scene, guide);
  if (d <= kViewWindowMm) {
    double curl = 0.0, roll_sum = 0.0;
    for (int f = 0; f < kNumFingers; ++f) {
      curl += std::clamp(hand.angles[joint_index(f, 1)], 0.0, 90.0) +
              std::clamp(hand.angles[joint_index(f, 2)], 0.0, 90.0);
      roll_sum += std::abs(hand.angles[joint_index(f, 0)]);
    }
    curl /= kNumFingers;
    double cx = kImageCols / 2.0 + 12.0 * (noise.uniform_at(1u << 20) - 0.5);
    double cy = kImageRows / 2.0 + 8.0 * (noise.uniform_at(2u << 20) - 0.5);
    double radius_px = 0.5 * scene.object_size_mm * detail::apparent_scale(d);
    const double squash = 1.0 / (1.0 + 0.012 * curl);
    detail::draw_object(img, scene, cx, cy, radius_px, squash, deg_to_rad(1.6 * roll_sum));
    if (d <= kContactThresholdMm)
      detail::fill_rect(img, cx, cy + radius_px * squash + 4.0, radius_px, 2.5, 0.05f, 0.05f,
                        0.06f);
  }

  const CouplingGeometry coupling = default_finger_model().coupling;
  for (int f = 0; f < kNumFingers; ++f) {
    const double roll = hand.angles[joint_index(f, 0)];
    const double pitch = hand.angles[joint_index(f, 1)];
    const double pip = hand.angles[joint_index(f, 2)];
    const double dip = rad_to_deg(coupled_dip_angle(coupling, deg_to_rad(std::clamp(pip, 0.0, 90.0))));

    double x = 54.0 + 50.0 * f + 0.6 * roll;
    double y = kImageRows - 6.0;
    double bend = 0.0;
    const double seg_len[3] = {30.0, 26.0, 20.0};
    const double seg_angle[3] = {pitch, pip, dip};
    for (int s = 0; s < 3; ++s) {
      bend += deg_to_rad(2.2 * seg_angle[s]);
      double nx = x + seg_len[s] * std::sin(bend);
      double ny = y - seg_len[s] * std::cos(bend);
      detail::draw_segment(img, x, y, nx, ny, 6.0 - s, 0.92f, 0.90f, 0.86f);
      x = nx;
      y = ny;
    }
  }
  return img;
}

}  // namespace dexhand
