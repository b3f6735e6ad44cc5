#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "dexhand/common.hpp"

namespace dexhand {

// Default middle-finger link lengths, mm (a-column of the D-H table).
inline constexpr double kLinkBase = 13.0;
inline constexpr double kLinkProximal = 18.0;
inline constexpr double kLinkIntermediate = 17.5;
inline constexpr double kLinkDistal = 18.0;
inline constexpr double kFingerReachMm = kLinkBase + kLinkProximal + kLinkIntermediate + kLinkDistal;

/// One Denavit-Hartenberg row (standard convention). Angles in radians, lengths in mm.
struct DhRow {
  double theta_offset = 0.0;
  double d = 0.0;
  double a = 0.0;
  double alpha = 0.0;
};

/**
 * @brief 4x4 homogeneous transform split into rotation block and translation (mm).
 */
struct Transform4 {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Transform4 operator*(const Transform4& rhs) const {
    return Transform4{rotation * rhs.rotation, rotation * rhs.translation + translation};
  }

  /// Max deviation from a proper rotation (orthonormality + det drift).
  double rotation_defect() const {
    double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    double det = std::abs(rotation.determinant() - 1.0);
    return std::max(ortho, det);
  }
};

/**
 * @brief Geometry of the PIP-DIP coupling wire.
 *
 * r is the PIP pulley radius, l3 and s the distances from the DIP rotation
 * center to the wire's distal anchor (at rest) and to the crossing point on
 * the PIP, gamma the angle between those two segments. l1_rest is the free
 * wire length between crossing point and anchor at full extension and must
 * satisfy the law of cosines in the (l3, s, gamma) triangle; construction
 * enforces that to 1e-9 relative.
 */
struct CouplingGeometry {
  double r = 3.5;
  double l3 = 6.0;
  double s = 7.0;
  double gamma = deg_to_rad(60.0);
  double l1_rest = 0.0;

  static CouplingGeometry make(double r, double l3, double s, double gamma) {
    CouplingGeometry g;
    g.r = r;
    g.l3 = l3;
    g.s = s;
    g.gamma = gamma;
    g.l1_rest = rest_length(l3, s, gamma);
    g.validate();
    return g;
  }

  static double rest_length(double l3, double s, double gamma) {
    return std::sqrt(l3 * l3 + s * s - 2.0 * l3 * s * std::cos(gamma));
  }

  void validate() const {
    if (!(r > 0.0 && l3 > 0.0 && s > 0.0 && l1_rest > 0.0))
      throw DomainError("coupling geometry: all lengths must be positive");
    if (!(l1_rest < l3 + s && l3 < s + l1_rest && s < l3 + l1_rest))
      throw DomainError("coupling geometry: (l3, s, l1_rest) violate the triangle inequality");
    double want = rest_length(l3, s, gamma);
    if (std::abs(l1_rest - want) > 1e-9 * std::max(1.0, want))
      throw DomainError("coupling geometry: l1_rest inconsistent with law of cosines");
  }

  /// Diagnostic angle between the anchor radius and the crossing-point radius for a given DIP angle.
  double beta(double theta4) const { return gamma - theta4; }
};

/// Chord swept on the PIP pulley when the PIP rotates by theta3.
inline double coupling_chord(const CouplingGeometry& g, double theta3) {
  return std::sqrt(2.0 * g.r * g.r * (1.0 - std::cos(theta3)));
}

/// Joint angles of one finger, radians. theta4 is always derived from theta3.
struct JointAngles {
  double theta1 = 0.0;  // MCP roll
  double theta2 = 0.0;  // MCP pitch
  double theta3 = 0.0;  // PIP
  double theta4 = 0.0;  // DIP (coupled)
};

/**
 * @brief Kinematic description of one finger: D-H rows, coupling wire, joint limits.
 *
 * All five fingers of the hand share this model.
 */
struct FingerModel {
  std::array<DhRow, 4> dh{};
  CouplingGeometry coupling{};
  std::array<std::array<double, 2>, 4> limits{};  // radians, [min, max] per joint

  void validate() const {
    for (const auto& row : dh) {
      if (row.a < 0.0) throw DomainError("finger model: D-H a must be non-negative");
      if (std::abs(row.alpha) > 1e-12 && std::abs(row.alpha - kPi / 2.0) > 1e-12)
        throw DomainError("finger model: alpha must be 0 or pi/2");
    }
    coupling.validate();
    for (const auto& lim : limits)
      if (!(lim[0] <= lim[1])) throw DomainError("finger model: empty joint-limit interval");
  }
};

/// Middle-finger model with default coupling and the standard joint limits.
inline FingerModel default_finger_model() {
  FingerModel m;
  m.dh = {DhRow{0.0, 0.0, kLinkBase, kPi / 2.0},
          DhRow{0.0, 0.0, kLinkProximal, 0.0},
          DhRow{0.0, 0.0, kLinkIntermediate, 0.0},
          DhRow{0.0, 0.0, kLinkDistal, 0.0}};
  m.coupling = CouplingGeometry::make(3.5, 6.0, 7.0, deg_to_rad(60.0));
  m.limits = {{{-kPi / 2.0, kPi / 2.0}, {0.0, kPi / 2.0}, {0.0, kPi / 2.0}, {0.0, kPi / 2.0}}};
  return m;
}

/**
 * @brief Standard D-H link transform RotZ(theta) * TransZ(d) * TransX(a) * RotX(alpha).
 */
inline Transform4 dh_transform(const DhRow& row, double theta) {
  const double th = theta + row.theta_offset;
  const double ct = std::cos(th), st = std::sin(th);
  const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
  Transform4 t;
  t.rotation << ct, -st * ca, st * sa,
                st, ct * ca, -ct * sa,
                0.0, sa, ca;
  t.translation << row.a * ct, row.a * st, row.d;
  return t;
}

/**
 * @brief Closed-form DIP angle for a given PIP angle.
 *
 * theta4 = gamma - acos((c1 + 2*l1*sqrt(2r^2(1-cos theta3)) + 2r^2 cos theta3) / (2*l3*s))
 * with c1 = l3^2 + s^2 - l1^2 - 2r^2. Follows from conservation of the
 * coupling-wire length: the chord paid out over the PIP pulley shortens the
 * free segment between crossing point and anchor by the same amount.
 *
 * @throws DomainError if theta3 is outside [0, pi/2] or the acos argument
 *         leaves [-1, 1] (geometry inconsistent with the pose).
 */
inline double coupled_dip_angle(const CouplingGeometry& g, double theta3) {
  if (theta3 < -1e-12 || theta3 > kPi / 2.0 + 1e-12)
    throw DomainError("coupled_dip_angle: theta3 outside [0, pi/2]");
  const double l1 = g.l1_rest;
  const double c1 = g.l3 * g.l3 + g.s * g.s - l1 * l1 - 2.0 * g.r * g.r;
  const double num = c1 + 2.0 * l1 * coupling_chord(g, theta3) + 2.0 * g.r * g.r * std::cos(theta3);
  double arg = num / (2.0 * g.l3 * g.s);
  if (arg < -1.0 - 1e-12 || arg > 1.0 + 1e-12)
    throw DomainError("coupled_dip_angle: acos argument outside [-1, 1]");
  arg = std::clamp(arg, -1.0, 1.0);
  return g.gamma - std::acos(arg);
}

/**
 * @brief Independent DIP-angle solver: bisection on wire-length conservation.
 *
 * Finds theta4 such that chord(theta3) + free_segment(theta4) equals the rest
 * wire length, where free_segment(theta4) = sqrt(l3^2 + s^2
 * - 2*l3*s*cos(gamma - theta4)). The free segment shrinks monotonically for
 * theta4 in [0, gamma], so bisection brackets the unique root there.
 * Terminates when the bracket is narrower than 1e-12 rad (residual well
 * under the 1e-9 contract).
 *
 * @throws NoRootError if the conservation constraint has no root in range.
 */
inline double coupling_oracle(const CouplingGeometry& g, double theta3) {
  if (theta3 < -1e-12 || theta3 > kPi / 2.0 + 1e-12)
    throw DomainError("coupling_oracle: theta3 outside [0, pi/2]");
  const double chord = coupling_chord(g, theta3);
  auto excess = [&](double theta4) {
    double free_seg = std::sqrt(g.l3 * g.l3 + g.s * g.s - 2.0 * g.l3 * g.s * std::cos(g.gamma - theta4));
    return chord + free_seg - g.l1_rest;
  };
  double lo = 0.0, hi = std::min(g.gamma, kPi / 2.0);
  if (excess(lo) < -1e-9) throw NoRootError("coupling_oracle: wire already slack at theta4 = 0");
  if (excess(hi) > 1e-9) throw NoRootError("coupling_oracle: wire constraint has no root in [0, pi/2]");
  for (int it = 0; it < 80 && (hi - lo) > 1e-12; ++it) {
    double mid = 0.5 * (lo + hi);
    (excess(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/**
 * @brief Fingertip pose from the three actuated angles; the DIP follows the coupling.
 *
 * @throws LimitError if any angle (including the derived DIP) is out of limits.
 */
inline Transform4 forward_kinematics(const FingerModel& m, double theta1, double theta2, double theta3) {
  const std::array<double, 3> actuated{theta1, theta2, theta3};
  for (int i = 0; i < 3; ++i)
    if (actuated[i] < m.limits[i][0] - 1e-12 || actuated[i] > m.limits[i][1] + 1e-12)
      throw LimitError("forward_kinematics: joint " + std::to_string(i + 1) + " out of limits");
  const double theta4 = coupled_dip_angle(m.coupling, theta3);
  if (theta4 < m.limits[3][0] - 1e-9 || theta4 > m.limits[3][1] + 1e-9)
    throw LimitError("forward_kinematics: coupled DIP angle out of limits");
  return dh_transform(m.dh[0], theta1) * dh_transform(m.dh[1], theta2) *
         dh_transform(m.dh[2], theta3) * dh_transform(m.dh[3], theta4);
}

using Vector6 = Eigen::Matrix<double, 6, 1>;

/**
 * @brief Six-component end-effector descriptor of the default finger.
 *
 * Components 0 and 2 are planar fingertip coordinates in mm, component 4 is
 * the dimensionless orientation term e^(theta4/pi); components 1, 3, 5 are
 * identically zero. Valid for the default link lengths only; coincides with
 * the forward-kinematics x-coordinate at the zero pose.
 */
inline Vector6 end_effector_vector(double theta1, double theta2, double theta3, double theta4) {
  const double c1 = std::cos(theta1), s1 = std::sin(theta1);
  const double c2 = std::cos(theta2), s2 = std::sin(theta2);
  const double sigma1 = c1 * c2 - s1 * s2;
  const double sigma2 = c1 * s2 + s1 * c2;
  const double sigma3 = kLinkProximal * c1 + kLinkIntermediate * (c1 * c2 - s1 * s2);
  const double sigma4 = -kLinkProximal * s1 + kLinkIntermediate * (c1 * s2 - s1 * c2);
  Vector6 v;
  v << sigma3 + kLinkDistal * std::cos(theta3) * sigma1 - kLinkDistal * std::sin(theta3) * sigma2 + kLinkBase,
      0.0,
      sigma4 - kLinkDistal * std::cos(theta3) * sigma2 - kLinkDistal * std::sin(theta3) * sigma1,
      0.0,
      std::exp(theta4 / kPi),
      0.0;
  return v;
}

// ---------------------------------------------------------------------------
// JSON loading. Degrees at the file boundary, radians inside.

inline FingerModel finger_model_from_json(const nlohmann::json& j) {
  FingerModel m = default_finger_model();
  if (j.contains("dh")) {
    const auto& rows = j.at("dh");
    if (!rows.is_array() || rows.size() != 4) throw DomainError("finger model: `dh` must hold exactly 4 rows");
    for (int i = 0; i < 4; ++i) {
      const auto& r = rows[i];
      m.dh[i].theta_offset = deg_to_rad(r.value("theta_offset_deg", 0.0));
      m.dh[i].d = r.value("d", 0.0);
      m.dh[i].a = r.at("a").get<double>();
      m.dh[i].alpha = deg_to_rad(r.value("alpha_deg", 0.0));
    }
  }
  if (j.contains("coupling")) {
    const auto& c = j.at("coupling");
    double r = c.value("r", 3.5);
    double l3 = c.value("l3", 6.0);
    double s = c.value("s", 7.0);
    double gamma = deg_to_rad(c.value("gamma_deg", 60.0));
    m.coupling = CouplingGeometry::make(r, l3, s, gamma);
    if (c.contains("l1_rest")) {
      m.coupling.l1_rest = c.at("l1_rest").get<double>();
      m.coupling.validate();
    }
  }
  if (j.contains("limits_deg")) {
    const auto& lim = j.at("limits_deg");
    if (!lim.is_array() || lim.size() != 4) throw DomainError("finger model: `limits_deg` must hold 4 intervals");
    for (int i = 0; i < 4; ++i) {
      m.limits[i][0] = deg_to_rad(lim[i].at(0).get<double>());
      m.limits[i][1] = deg_to_rad(lim[i].at(1).get<double>());
    }
  }
  m.validate();
  return m;
}

inline FingerModel load_finger_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open finger model file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("finger model: ") + e.what());
  }
  return finger_model_from_json(j);
}

}  // namespace dexhand
