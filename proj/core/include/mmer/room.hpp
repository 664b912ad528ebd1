#pragma once

#include <cstdint>
#include <vector>

namespace mmer::acoustics {

constexpr double kSpeedOfSound = 343.0;  // m/s
constexpr double kSourceHeight = 1.75;   // m
constexpr double kMicHeight = 1.6;       // m
constexpr double kWallMargin = 0.5;      // m
constexpr double kMicSpacing = 0.05;     // m, rigid linear array
constexpr double kMinSourceMicDist = 0.2;

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

double distance(const Vec3& a, const Vec3& b);

// Shoebox room with one source and a rigid linear microphone array.
struct RoomSpec {
  double length_m = 0.0;
  double width_m = 0.0;
  double height_m = 2.9;
  double t60_s = 0.0;
  Vec3 source_pos;
  std::vector<Vec3> mic_positions;
  uint64_t seed = 0;

  double volume() const { return length_m * width_m * height_m; }
  double surface_area() const {
    return 2.0 * (length_m * width_m + length_m * height_m + width_m * height_m);
  }

  // Throws std::invalid_argument naming the first violated constraint.
  void validate() const;
};

// d_c = 0.057 * sqrt(V / T60), the Sabine-field approximation.
double critical_distance(const RoomSpec& room);

// Uniform Sabine absorption hitting the target T60; alpha = 0.161 V / (S T60),
// clamped to (0, 0.99] with a warning when the room is too dead for the model.
double sabine_absorption(const RoomSpec& room);

// Rejection-samples a room/source/array geometry until every RoomSpec
// constraint holds. Deterministic per seed. Throws after 10000 attempts.
RoomSpec sample_room(uint64_t rng_seed, int mic_count);

}  // namespace mmer::acoustics
