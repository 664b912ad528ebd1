#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmer/room.hpp"

namespace mmer::acoustics {

// Multi-channel room impulse response set for one source/array placement.
// `room` is present for simulated sets; externally recorded RIRs carry only
// what their sidecar provides.
struct RirSet {
  int sample_rate_hz = 0;
  std::vector<std::vector<double>> rirs;
  std::optional<RoomSpec> room;
  std::string name;

  size_t channel_count() const { return rirs.size(); }
  size_t length() const { return rirs.empty() ? 0 : rirs[0].size(); }
};

// Image-source simulation over a shoebox room with a uniform reflection
// coefficient on all six surfaces, fractional delays realized by an 81-tap
// Hann-windowed sinc, per-image amplitude beta^n / (4 pi d). Image order is
// chosen so the furthest image lands beyond duration_s. The coefficient is
// seeded at sqrt(1 - sabine_absorption) and then calibrated against a coarse
// Schroeder measurement so the realized T60 tracks room.t60_s (raw Sabine
// walls overshoot the target by 40-70% in rooms of this shape).
RirSet simulate_rir(const RoomSpec& room, int sample_rate_hz, double duration_s);

// Backward-integrated energy decay, normalized to 0 dB at the total energy.
std::vector<double> schroeder_curve_db(const std::vector<double>& rir);

// T60 from the -5..-25 dB span of the Schroeder curve, extrapolated to
// -60 dB. Returns NaN when the curve never reaches -25 dB.
double schroeder_t60(const std::vector<double>& rir, int sample_rate_hz);

// WAV (IEEE float32, C channels) plus JSON sidecar carrying the RoomSpec.
// `base` is the path without extension; writes base.wav and base.json.
void save_rir_set(const std::string& base, const RirSet& set);

// Loads a multi-channel WAV; picks up base.json when present.
RirSet load_rir_set(const std::string& wav_path);

}  // namespace mmer::acoustics
