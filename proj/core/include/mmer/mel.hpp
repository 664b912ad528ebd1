#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmer/audio_types.hpp"

namespace mmer::frontend {

struct MelConfig {
  int sample_rate_hz = 16000;
  int win_samples = 1024;
  int hop_samples = 320;
  int mel_bands = 64;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-10;
};

// Per-utterance log-mel features, shape (channels, mel bands, frames),
// row-major.
struct MelTensor {
  int channels = 0;
  int bands = 0;
  int frames = 0;
  int sample_rate_hz = 0;
  int hop_samples = 0;
  std::vector<float> data;

  float& at(int c, int f, int t) { return data[(static_cast<size_t>(c) * bands + f) * frames + t]; }
  float at(int c, int f, int t) const {
    return data[(static_cast<size_t>(c) * bands + f) * frames + t];
  }
  size_t size() const { return data.size(); }
};

// HTK mel scale helpers.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Center frequencies of the triangular filters, length mel_bands.
std::vector<double> mel_center_frequencies(const MelConfig& cfg);

// Hann-windowed STFT -> power spectrum -> triangular mel filterbank ->
// ln(value + floor), independently per channel.
MelTensor mel_spectrogram(const MultiChannelAudio& audio, const MelConfig& cfg);

// Arithmetic mean across the channel axis; result has channels == 1.
MelTensor average_channels(const MelTensor& mel);

// SpecAugment: 4 time strips of exactly 64 frames and 2 frequency strips of
// exactly 8 bands (clamped at clip edges), positions shared across channels,
// masked cells set to the per-channel mean.
MelTensor spec_augment(const MelTensor& mel, uint64_t rng_seed);

struct SpecAugmentConfig {
  int time_masks = 4;
  int time_width = 64;
  int freq_masks = 2;
  int freq_width = 8;
};
MelTensor spec_augment(const MelTensor& mel, const SpecAugmentConfig& cfg, uint64_t rng_seed);

// Fits the time axis to exactly `target_frames`: center crop when longer,
// reflect padding on the right when shorter.
MelTensor fit_frames(const MelTensor& mel, int target_frames);

// "MELT" cache: magic, u32 version, u32 C/F/T, f32 little-endian row-major.
void melt_write(const std::string& path, const MelTensor& mel);
MelTensor melt_read(const std::string& path);

}  // namespace mmer::frontend
