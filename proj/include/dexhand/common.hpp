#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dexhand {

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

inline constexpr int kNumFingers = 5;
inline constexpr int kJointsPerFinger = 3;  // MCP roll, MCP pitch, PIP (DIP is coupled)
inline constexpr int kNumJoints = kNumFingers * kJointsPerFinger;

/// Flat joint index for finger f in [0,5) and joint j in {0: roll, 1: pitch, 2: PIP}.
inline constexpr int joint_index(int finger, int joint) { return finger * kJointsPerFinger + joint; }
inline constexpr bool is_roll_joint(int index) { return index % kJointsPerFinger == 0; }

/// Per-joint angles or setpoints of the whole hand, degrees.
using Angles15 = std::array<double, kNumJoints>;

/// 15 per-joint rotate-1-degree bits.
using Command15 = std::array<std::uint8_t, kNumJoints>;

inline Angles15 make_angles(double v = 0.0) {
  Angles15 a;
  a.fill(v);
  return a;
}

/// FNV-1a over a byte string, used for config fingerprints in reports and manifests.
inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Error taxonomy. One type per failure mode so callers can catch precisely.
struct DomainError : std::runtime_error { using std::runtime_error::runtime_error; };
struct NoRootError : std::runtime_error { using std::runtime_error::runtime_error; };
struct LimitError : std::runtime_error { using std::runtime_error::runtime_error; };
struct EmptyCloudError : std::runtime_error { using std::runtime_error::runtime_error; };
struct IoError : std::runtime_error { using std::runtime_error::runtime_error; };
struct TooShortError : std::runtime_error { using std::runtime_error::runtime_error; };
struct UnknownTaskError : std::runtime_error { using std::runtime_error::runtime_error; };
struct SizeError : std::runtime_error { using std::runtime_error::runtime_error; };
struct RangeError : std::runtime_error { using std::runtime_error::runtime_error; };
struct MissingImageError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ShapeError : std::runtime_error { using std::runtime_error::runtime_error; };
struct EmptyDatasetError : std::runtime_error { using std::runtime_error::runtime_error; };
struct UnknownKeyError : std::runtime_error { using std::runtime_error::runtime_error; };

/// Parse failure carrying the 1-based line number of the offending input line.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace dexhand
