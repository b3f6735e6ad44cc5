#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dexhand/kinematics.hpp"
#include "dexhand/rng.hpp"

using namespace dexhand;
using Catch::Approx;

namespace {

/// Random coupling geometries that keep the wire taut and the DIP in range
/// over the whole PIP travel.
std::vector<CouplingGeometry> sample_valid_geometries(int count, std::uint64_t seed) {
  std::vector<CouplingGeometry> out;
  SplitMix64 rng(seed);
  std::uint64_t i = 0;
  while (static_cast<int>(out.size()) < count) {
    const double r = 1.5 + 3.5 * rng.uniform_at(i++);
    const double l3 = 4.0 + 6.0 * rng.uniform_at(i++);
    const double s = 5.0 + 7.0 * rng.uniform_at(i++);
    const double gamma = deg_to_rad(35.0 + 50.0 * rng.uniform_at(i++));
    CouplingGeometry g;
    try {
      g = CouplingGeometry::make(r, l3, s, gamma);
    } catch (const DomainError&) {
      continue;
    }
    if (g.l1_rest < std::sqrt(2.0) * r + 0.5) continue;  // wire would fully unwind
    try {
      const double hi = coupled_dip_angle(g, kPi / 2.0);
      if (!(hi > 0.0 && hi < std::min(g.gamma, kPi / 2.0))) continue;
      coupling_oracle(g, kPi / 2.0);
    } catch (const std::exception&) {
      continue;
    }
    out.push_back(g);
  }
  return out;
}

}  // namespace

TEST_CASE("dh_transform matches the standard product") {
  SECTION("zero-angle planar row is a pure x translation") {
    Transform4 t = dh_transform(DhRow{0.0, 0.0, 18.0, 0.0}, 0.0);
    REQUIRE(t.translation.x() == Approx(18.0).margin(1e-12));
    REQUIRE(t.translation.y() == Approx(0.0).margin(1e-12));
    REQUIRE(t.translation.z() == Approx(0.0).margin(1e-12));
    REQUIRE((t.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("quarter turn moves the link to the y axis") {
    Transform4 t = dh_transform(DhRow{0.0, 0.0, 18.0, 0.0}, kPi / 2.0);
    REQUIRE(t.translation.x() == Approx(0.0).margin(1e-12));
    REQUIRE(t.translation.y() == Approx(18.0).margin(1e-12));
  }

  SECTION("base row twists y into z") {
    Transform4 t = dh_transform(DhRow{0.0, 0.0, 13.0, kPi / 2.0}, 0.0);
    REQUIRE(t.translation.x() == Approx(13.0).margin(1e-12));
    Eigen::Vector3d mapped = t.rotation * Eigen::Vector3d::UnitY();
    REQUIRE((mapped - Eigen::Vector3d::UnitZ()).norm() < 1e-12);
  }

  SECTION("theta offset adds to the joint angle") {
    Transform4 a = dh_transform(DhRow{0.3, 0.0, 10.0, 0.0}, 0.4);
    Transform4 b = dh_transform(DhRow{0.0, 0.0, 10.0, 0.0}, 0.7);
    REQUIRE((a.translation - b.translation).norm() < 1e-12);
  }
}

TEST_CASE("coupled DIP angle follows the wire-conservation oracle") {
  const CouplingGeometry geom = default_finger_model().coupling;

  SECTION("rest pose gives zero") {
    REQUIRE(std::abs(coupled_dip_angle(geom, 0.0)) < 1e-9);
    REQUIRE(std::abs(coupling_oracle(geom, 0.0)) < 1e-9);
  }

  SECTION("closed form tracks the oracle on a 1000-point grid") {
    double worst = 0.0;
    double prev = -1.0;
    for (int k = 0; k < 1000; ++k) {
      const double theta3 = (kPi / 2.0) * k / 999.0;
      const double closed = coupled_dip_angle(geom, theta3);
      const double oracle = coupling_oracle(geom, theta3);
      worst = std::max(worst, std::abs(closed - oracle));
      REQUIRE(closed >= prev - 1e-9);  // non-decreasing
      prev = closed;
    }
    REQUIRE(worst < 1e-6);
  }

  SECTION("mid travel lies strictly between the endpoints") {
    const double lo = coupled_dip_angle(geom, 0.0);
    const double hi = coupled_dip_angle(geom, kPi / 2.0);
    const double mid = coupled_dip_angle(geom, kPi / 4.0);
    REQUIRE(mid > lo);
    REQUIRE(mid < hi);
  }

  SECTION("oracle root satisfies the conservation residual") {
    for (double theta3 : {0.1, 0.5, 1.0, kPi / 2.0}) {
      const double theta4 = coupling_oracle(geom, theta3);
      const double chord = coupling_chord(geom, theta3);
      const double free_seg = std::sqrt(geom.l3 * geom.l3 + geom.s * geom.s -
                                        2.0 * geom.l3 * geom.s * std::cos(geom.gamma - theta4));
      REQUIRE(std::abs(chord + free_seg - geom.l1_rest) < 1e-9);
    }
  }

  SECTION("agreement holds across randomized valid geometries") {
    for (const auto& g : sample_valid_geometries(5, 42)) {
      for (int k = 0; k <= 100; ++k) {
        const double theta3 = (kPi / 2.0) * k / 100.0;
        REQUIRE(std::abs(coupled_dip_angle(g, theta3) - coupling_oracle(g, theta3)) < 1e-6);
      }
    }
  }

  SECTION("out-of-range PIP angle is rejected") {
    REQUIRE_THROWS_AS(coupled_dip_angle(geom, -0.2), DomainError);
    REQUIRE_THROWS_AS(coupled_dip_angle(geom, kPi), DomainError);
    REQUIRE_THROWS_AS(coupling_oracle(geom, -0.2), DomainError);
  }
}

TEST_CASE("coupling geometry construction is validated") {
  SECTION("law-of-cosines consistency is enforced") {
    CouplingGeometry g = CouplingGeometry::make(3.5, 6.0, 7.0, deg_to_rad(60.0));
    REQUIRE(g.l1_rest == Approx(std::sqrt(43.0)).epsilon(1e-12));
    g.l1_rest += 0.01;
    REQUIRE_THROWS_AS(g.validate(), DomainError);
  }

  SECTION("non-positive lengths are rejected") {
    REQUIRE_THROWS_AS(CouplingGeometry::make(-1.0, 6.0, 7.0, 1.0), DomainError);
  }

  SECTION("beta diagnostic is the anchor angle minus the DIP angle") {
    CouplingGeometry g = default_finger_model().coupling;
    REQUIRE(g.beta(0.3) == Approx(g.gamma - 0.3).epsilon(1e-12));
  }
}

TEST_CASE("forward kinematics of the default finger") {
  const FingerModel model = default_finger_model();

  SECTION("zero pose reaches the stretched-out fingertip") {
    Transform4 tip = forward_kinematics(model, 0.0, 0.0, 0.0);
    REQUIRE(std::abs(tip.translation.x() - 66.5) < 1e-9);
    REQUIRE(std::abs(tip.translation.y()) < 1e-9);
    REQUIRE(std::abs(tip.translation.z()) < 1e-9);
  }

  SECTION("base roll spins the whole finger about z") {
    Transform4 tip = forward_kinematics(model, kPi / 2.0, 0.0, 0.0);
    REQUIRE(std::abs(tip.translation.x()) < 1e-9);
    REQUIRE(std::abs(tip.translation.y() - 66.5) < 1e-9);
    REQUIRE(std::abs(tip.translation.z()) < 1e-9);
  }

  SECTION("right-angle MCP pitch folds the distal links upward") {
    Transform4 tip = forward_kinematics(model, 0.0, kPi / 2.0, 0.0);
    REQUIRE(std::abs(tip.translation.x() - 13.0) < 1e-9);
    REQUIRE(std::abs(tip.translation.y()) < 1e-9);
    REQUIRE(std::abs(tip.translation.z() - 53.5) < 1e-9);
  }

  SECTION("angles outside the limits are rejected") {
    REQUIRE_THROWS_AS(forward_kinematics(model, 0.0, -0.1, 0.0), LimitError);
    REQUIRE_THROWS_AS(forward_kinematics(model, 2.0, 0.0, 0.0), LimitError);
  }

  SECTION("rotation stays orthonormal and the reach is bounded, randomized") {
    SplitMix64 rng(7);
    for (int k = 0; k < 10000; ++k) {
      const double t1 = -kPi / 2.0 + kPi * rng.uniform_at(3 * k);
      const double t2 = (kPi / 2.0) * rng.uniform_at(3 * k + 1);
      const double t3 = (kPi / 2.0) * rng.uniform_at(3 * k + 2);
      Transform4 tip = forward_kinematics(model, t1, t2, t3);
      REQUIRE(tip.rotation_defect() < 1e-9);
      REQUIRE(tip.translation.norm() <= kFingerReachMm + 1e-6);
    }
  }
}

TEST_CASE("end effector vector structure") {
  SECTION("zero pose") {
    Vector6 v = end_effector_vector(0.0, 0.0, 0.0, 0.0);
    REQUIRE(v(0) == Approx(66.5).margin(1e-12));
    REQUIRE(v(1) == 0.0);
    REQUIRE(v(2) == Approx(0.0).margin(1e-12));
    REQUIRE(v(3) == 0.0);
    REQUIRE(v(4) == Approx(1.0).margin(1e-12));
    REQUIRE(v(5) == 0.0);
  }

  SECTION("odd components are exactly zero for random inputs") {
    SplitMix64 rng(11);
    for (int k = 0; k < 1000; ++k) {
      Vector6 v = end_effector_vector(rng.uniform_at(4 * k) * kPi, rng.uniform_at(4 * k + 1) * kPi,
                                      rng.uniform_at(4 * k + 2) * kPi,
                                      rng.uniform_at(4 * k + 3) * kPi);
      REQUIRE(v(1) == 0.0);
      REQUIRE(v(3) == 0.0);
      REQUIRE(v(5) == 0.0);
      REQUIRE(v(4) > 0.0);
    }
  }

  SECTION("orientation component is the exponential of the DIP ratio") {
    Vector6 v = end_effector_vector(0.0, 0.0, 0.0, kPi);
    REQUIRE(v(4) == Approx(std::exp(1.0)).epsilon(1e-12));
  }

  SECTION("component 0 equals the forward-kinematics x at the zero pose") {
    Vector6 v = end_effector_vector(0.0, 0.0, 0.0, 0.0);
    Transform4 tip = forward_kinematics(default_finger_model(), 0.0, 0.0, 0.0);
    REQUIRE(v(0) == Approx(tip.translation.x()).margin(1e-9));
  }
}

TEST_CASE("finger model JSON loading") {
  SECTION("defaults survive an empty document") {
    FingerModel m = finger_model_from_json(nlohmann::json::object());
    REQUIRE(m.dh[0].a == Approx(13.0));
    REQUIRE(m.dh[3].a == Approx(18.0));
    REQUIRE(m.coupling.l1_rest == Approx(std::sqrt(43.0)));
  }

  SECTION("full document round trip") {
    nlohmann::json j = {
        {"dh",
         {{{"a", 13.0}, {"alpha_deg", 90.0}},
          {{"a", 18.0}},
          {{"a", 17.5}},
          {{"a", 18.0}}}},
        {"coupling", {{"r", 3.5}, {"l3", 6.0}, {"s", 7.0}, {"gamma_deg", 60.0}}},
        {"limits_deg", {{-90.0, 90.0}, {0.0, 90.0}, {0.0, 90.0}, {0.0, 90.0}}}};
    FingerModel m = finger_model_from_json(j);
    REQUIRE(m.dh[0].alpha == Approx(kPi / 2.0));
    REQUIRE(m.limits[0][0] == Approx(-kPi / 2.0));
    Transform4 tip = forward_kinematics(m, 0.0, 0.0, 0.0);
    REQUIRE(std::abs(tip.translation.x() - 66.5) < 1e-9);
  }

  SECTION("wrong dh row count is rejected") {
    nlohmann::json j = {{"dh", {{{"a", 1.0}}}}};
    REQUIRE_THROWS_AS(finger_model_from_json(j), DomainError);
  }

  SECTION("inconsistent explicit rest length is rejected") {
    nlohmann::json j = {{"coupling", {{"r", 3.5}, {"l3", 6.0}, {"s", 7.0}, {"gamma_deg", 60.0},
                                      {"l1_rest", 9.9}}}};
    REQUIRE_THROWS_AS(finger_model_from_json(j), DomainError);
  }
}
