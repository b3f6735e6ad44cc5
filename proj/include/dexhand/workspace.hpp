#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "dexhand/common.hpp"
#include "dexhand/kinematics.hpp"
#include "dexhand/rng.hpp"

namespace dexhand {

/// Fingertip positions sampled from uniformly random in-limit poses.
struct WorkspaceCloud {
  std::vector<Eigen::Vector3d> points;
  std::uint64_t seed = 0;
  std::size_t sample_count = 0;
};

struct WorkspaceStats {
  double volume_mm3 = 0.0;
  Eigen::Vector3d bbox_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d bbox_max = Eigen::Vector3d::Zero();
  double voxel_mm = 0.0;
};

/**
 * @brief Draw n fingertip positions from uniform random joint angles.
 *
 * Sample i consumes generator values 3i..3i+2 regardless of how the index
 * range is partitioned across workers, so a parallel split concatenated in
 * index order is bit-identical to the serial run.
 */
inline WorkspaceCloud sample_workspace(const FingerModel& model, std::size_t n, std::uint64_t seed) {
  WorkspaceCloud cloud;
  cloud.seed = seed;
  cloud.sample_count = n;
  cloud.points.resize(n);
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    double theta[3];
    for (int k = 0; k < 3; ++k) {
      const auto& lim = model.limits[k];
      theta[k] = lim[0] + rng.uniform_at(3 * i + k) * (lim[1] - lim[0]);
    }
    cloud.points[i] = forward_kinematics(model, theta[0], theta[1], theta[2]).translation;
  }
  return cloud;
}

namespace detail {

/// Voxel index of a coordinate on a grid anchored at the origin.
inline std::int64_t voxel_index(double x, double voxel_mm) {
  return static_cast<std::int64_t>(std::floor(x / voxel_mm));
}

/// Pack three voxel indices (each within +/- 2^20) into one key.
inline std::uint64_t voxel_key(std::int64_t ix, std::int64_t iy, std::int64_t iz) {
  constexpr std::int64_t kOffset = 1 << 20;
  constexpr std::uint64_t kMask = (1u << 21) - 1;
  return ((static_cast<std::uint64_t>(ix + kOffset) & kMask) << 42) |
         ((static_cast<std::uint64_t>(iy + kOffset) & kMask) << 21) |
         (static_cast<std::uint64_t>(iz + kOffset) & kMask);
}

}  // namespace detail

/**
 * @brief Occupied-voxel volume estimate plus axis-aligned bounds.
 *
 * Volume is (distinct occupied voxels) * voxel_mm^3 on a grid anchored at
 * the origin, which handles the non-convex reachable set without a hull.
 *
 * @throws EmptyCloudError for an empty cloud, RangeError for voxel_mm <= 0.
 */
inline WorkspaceStats estimate_volume(const WorkspaceCloud& cloud, double voxel_mm) {
  if (cloud.points.empty()) throw EmptyCloudError("estimate_volume: empty cloud");
  if (!(voxel_mm > 0.0)) throw RangeError("estimate_volume: voxel_mm must be positive");
  WorkspaceStats stats;
  stats.voxel_mm = voxel_mm;
  stats.bbox_min = cloud.points.front();
  stats.bbox_max = cloud.points.front();
  std::unordered_set<std::uint64_t> occupied;
  occupied.reserve(cloud.points.size());
  for (const auto& p : cloud.points) {
    stats.bbox_min = stats.bbox_min.cwiseMin(p);
    stats.bbox_max = stats.bbox_max.cwiseMax(p);
    occupied.insert(detail::voxel_key(detail::voxel_index(p.x(), voxel_mm),
                                      detail::voxel_index(p.y(), voxel_mm),
                                      detail::voxel_index(p.z(), voxel_mm)));
  }
  stats.volume_mm3 = static_cast<double>(occupied.size()) * voxel_mm * voxel_mm * voxel_mm;
  return stats;
}

enum class CloudFormat { kCsv, kPly, kPpmScatter };

inline CloudFormat cloud_format_from_name(const std::string& name) {
  if (name == "csv") return CloudFormat::kCsv;
  if (name == "ply") return CloudFormat::kPly;
  if (name == "ppm-scatter") return CloudFormat::kPpmScatter;
  throw UnknownKeyError("unknown cloud format: " + name);
}

namespace detail {

inline void export_csv(const WorkspaceCloud& cloud, std::ostream& out) {
  out << "x,y,z\n";
  char line[96];
  for (const auto& p : cloud.points) {
    std::snprintf(line, sizeof(line), "%.6f,%.6f,%.6f\n", p.x(), p.y(), p.z());
    out << line;
  }
}

inline void export_ply(const WorkspaceCloud& cloud, std::ostream& out) {
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  char line[96];
  for (const auto& p : cloud.points) {
    std::snprintf(line, sizeof(line), "%.6f %.6f %.6f\n", p.x(), p.y(), p.z());
    out << line;
  }
}

/// Orthographic x-z scatter, white points on black, for a quick look.
inline void export_ppm_scatter(const WorkspaceCloud& cloud, std::ostream& out) {
  constexpr int kSide = 400;
  constexpr double kMargin = 4.0;
  double lo_x = -kFingerReachMm, hi_x = kFingerReachMm;
  double lo_z = -kFingerReachMm, hi_z = kFingerReachMm;
  std::vector<std::uint8_t> gray(kSide * kSide, 0);
  const double scale = (kSide - 2.0 * kMargin) / (hi_x - lo_x);
  for (const auto& p : cloud.points) {
    int px = static_cast<int>(kMargin + (p.x() - lo_x) * scale);
    int py = static_cast<int>(kMargin + (hi_z - p.z()) * scale);
    if (px >= 0 && px < kSide && py >= 0 && py < kSide) gray[py * kSide + px] = 255;
  }
  out << "P6\n" << kSide << " " << kSide << "\n255\n";
  for (std::uint8_t g : gray) {
    char rgb[3] = {static_cast<char>(g), static_cast<char>(g), static_cast<char>(g)};
    out.write(rgb, 3);
  }
}

}  // namespace detail

/**
 * @brief Write the cloud to disk. csv has an `x,y,z` header row and six
 * decimal places; ply is an ASCII point cloud; ppm-scatter is an
 * orthographic x-z raster.
 *
 * @throws IoError if the file cannot be opened or written.
 */
inline void export_cloud(const WorkspaceCloud& cloud, CloudFormat format, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("export_cloud: cannot open " + path);
  switch (format) {
    case CloudFormat::kCsv: detail::export_csv(cloud, out); break;
    case CloudFormat::kPly: detail::export_ply(cloud, out); break;
    case CloudFormat::kPpmScatter: detail::export_ppm_scatter(cloud, out); break;
  }
  out.flush();
  if (!out) throw IoError("export_cloud: write failed for " + path);
}

}  // namespace dexhand
