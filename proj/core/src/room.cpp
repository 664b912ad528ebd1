#include "mmer/room.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "mmer/rng.hpp"

namespace mmer::acoustics {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("RoomSpec: " + what);
}
}  // namespace

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void RoomSpec::validate() const {
  require(length_m >= 3.0 && length_m <= 8.0, "length outside [3, 8] m");
  require(width_m >= 3.0 && width_m <= 8.0, "width outside [3, 8] m");
  const double aspect = std::max(length_m, width_m) / std::min(length_m, width_m);
  require(aspect >= 1.0 && aspect <= 1.6, "aspect ratio outside [1, 1.6]");
  require(height_m == 2.9, "height must be 2.9 m");
  require(t60_s >= 0.5 && t60_s <= 0.85, "T60 outside [0.5, 0.85] s");
  require(source_pos.z == kSourceHeight, "source height must be 1.75 m");
  require(source_pos.x >= kWallMargin && source_pos.x <= length_m - kWallMargin &&
              source_pos.y >= kWallMargin && source_pos.y <= width_m - kWallMargin,
          "source closer than 0.5 m to a wall");
  require(!mic_positions.empty(), "no microphones");
  const double dc = critical_distance(*this);
  for (size_t i = 0; i < mic_positions.size(); ++i) {
    const auto& m = mic_positions[i];
    const std::string tag = "mic " + std::to_string(i);
    require(m.z == kMicHeight, tag + " height must be 1.6 m");
    require(m.x >= kWallMargin && m.x <= length_m - kWallMargin && m.y >= kWallMargin &&
                m.y <= width_m - kWallMargin,
            tag + " closer than 0.5 m to a wall");
    const double d = distance(source_pos, m);
    require(d >= kMinSourceMicDist, tag + " closer than 0.2 m to the source");
    require(d <= dc, tag + " beyond the critical distance");
  }
}

double critical_distance(const RoomSpec& room) {
  return 0.057 * std::sqrt(room.volume() / room.t60_s);
}

double sabine_absorption(const RoomSpec& room) {
  const double alpha = 0.161 * room.volume() / (room.surface_area() * room.t60_s);
  if (alpha >= 1.0) {
    std::fprintf(stderr, "warning: room too dead for Sabine model (alpha=%.3f), clamping\n",
                 alpha);
    return 0.99;
  }
  return alpha;
}

RoomSpec sample_room(uint64_t rng_seed, int mic_count) {
  if (mic_count < 1) throw std::invalid_argument("sample_room: mic_count must be >= 1");
  Rng rng(rng_seed);

  for (int attempt = 0; attempt < 10000; ++attempt) {
    RoomSpec room;
    room.seed = rng_seed;
    room.length_m = rng.uniform(3.0, 8.0);
    room.width_m = rng.uniform(3.0, 8.0);
    const double aspect =
        std::max(room.length_m, room.width_m) / std::min(room.length_m, room.width_m);
    if (aspect > 1.6) continue;
    room.t60_s = rng.uniform(0.5, 0.85);

    room.source_pos = {rng.uniform(kWallMargin, room.length_m - kWallMargin),
                       rng.uniform(kWallMargin, room.width_m - kWallMargin), kSourceHeight};

    const double dc = critical_distance(room);
    const double radius = rng.uniform(kMinSourceMicDist, dc);
    const double azimuth = rng.uniform(0.0, kTwoPi);
    const double orientation = rng.uniform(0.0, kTwoPi);

    const double cx = room.source_pos.x + radius * std::cos(azimuth);
    const double cy = room.source_pos.y + radius * std::sin(azimuth);
    const double half = 0.5 * (mic_count - 1);
    room.mic_positions.resize(mic_count);
    for (int i = 0; i < mic_count; ++i) {
      const double off = (i - half) * kMicSpacing;
      room.mic_positions[i] = {cx + off * std::cos(orientation), cy + off * std::sin(orientation),
                               kMicHeight};
    }

    try {
      room.validate();
    } catch (const std::invalid_argument&) {
      continue;
    }
    return room;
  }
  throw std::runtime_error("sample_room: infeasible geometry after 10000 attempts");
}

}  // namespace mmer::acoustics
