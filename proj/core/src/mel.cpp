#include "mmer/mel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mmer/fft.hpp"
#include "mmer/rng.hpp"

namespace mmer::frontend {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

struct MelFilterbank {
  // weights[f] spans bins [first_bin[f], first_bin[f] + weights[f].size()).
  std::vector<int> first_bin;
  std::vector<std::vector<double>> weights;
};

MelFilterbank build_filterbank(const MelConfig& cfg) {
  const int n_bins = cfg.win_samples / 2 + 1;
  const double bin_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.win_samples;

  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(cfg.mel_bands + 2);
  for (int i = 0; i < cfg.mel_bands + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.mel_bands + 1));

  MelFilterbank fb;
  fb.first_bin.resize(cfg.mel_bands);
  fb.weights.resize(cfg.mel_bands);
  for (int f = 0; f < cfg.mel_bands; ++f) {
    const double lo = edges[f], center = edges[f + 1], hi = edges[f + 2];
    std::vector<double> w;
    int first = -1;
    for (int b = 0; b < n_bins; ++b) {
      const double freq = b * bin_hz;
      double v = 0.0;
      if (freq > lo && freq < center)
        v = (freq - lo) / (center - lo);
      else if (freq >= center && freq < hi)
        v = (hi - freq) / (hi - center);
      if (v > 0.0) {
        if (first < 0) first = b;
        w.push_back(v);
      } else if (first >= 0) {
        break;
      }
    }
    fb.first_bin[f] = std::max(first, 0);
    fb.weights[f] = std::move(w);
  }
  return fb;
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(const MelConfig& cfg) {
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> centers(cfg.mel_bands);
  for (int f = 0; f < cfg.mel_bands; ++f)
    centers[f] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (f + 1) / (cfg.mel_bands + 1));
  return centers;
}

MelTensor mel_spectrogram(const MultiChannelAudio& audio, const MelConfig& cfg) {
  audio.validate();
  const long n = static_cast<long>(audio.frame_count());
  if (n < cfg.win_samples)
    throw std::invalid_argument("mel_spectrogram: audio shorter than one window (" +
                                std::to_string(n) + " < " + std::to_string(cfg.win_samples) + ")");

  const int frames = 1 + static_cast<int>((n - cfg.win_samples) / cfg.hop_samples);
  const int n_bins = cfg.win_samples / 2 + 1;

  std::vector<double> window(cfg.win_samples);
  for (int i = 0; i < cfg.win_samples; ++i)
    window[i] = 0.5 * (1.0 - std::cos(kTwoPi * i / cfg.win_samples));

  const auto fb = build_filterbank(cfg);

  MelTensor out;
  out.channels = static_cast<int>(audio.channel_count());
  out.bands = cfg.mel_bands;
  out.frames = frames;
  out.sample_rate_hz = cfg.sample_rate_hz;
  out.hop_samples = cfg.hop_samples;
  out.data.resize(static_cast<size_t>(out.channels) * out.bands * frames);

  std::vector<double> frame(cfg.win_samples);
  std::vector<double> power(n_bins);
  for (int c = 0; c < out.channels; ++c) {
    const auto& samples = audio.channels[c];
    for (int t = 0; t < frames; ++t) {
      const long offset = static_cast<long>(t) * cfg.hop_samples;
      for (int i = 0; i < cfg.win_samples; ++i) frame[i] = samples[offset + i] * window[i];
      const auto spectrum = dsp::rfft(frame);
      for (int b = 0; b < n_bins; ++b) power[b] = std::norm(spectrum[b]);
      for (int f = 0; f < cfg.mel_bands; ++f) {
        double acc = 0.0;
        const auto& w = fb.weights[f];
        const int first = fb.first_bin[f];
        for (size_t i = 0; i < w.size(); ++i) acc += w[i] * power[first + i];
        out.at(c, f, t) = static_cast<float>(std::log(acc + cfg.log_floor));
      }
    }
  }
  return out;
}

MelTensor average_channels(const MelTensor& mel) {
  if (mel.channels < 1) throw std::invalid_argument("average_channels: no channels");
  MelTensor out;
  out.channels = 1;
  out.bands = mel.bands;
  out.frames = mel.frames;
  out.sample_rate_hz = mel.sample_rate_hz;
  out.hop_samples = mel.hop_samples;
  out.data.assign(static_cast<size_t>(mel.bands) * mel.frames, 0.0f);
  const size_t plane = out.data.size();
  for (int c = 0; c < mel.channels; ++c)
    for (size_t i = 0; i < plane; ++i) out.data[i] += mel.data[c * plane + i];
  const float inv = 1.0f / static_cast<float>(mel.channels);
  for (auto& v : out.data) v *= inv;
  return out;
}

MelTensor spec_augment(const MelTensor& mel, uint64_t rng_seed) {
  return spec_augment(mel, SpecAugmentConfig{}, rng_seed);
}

MelTensor spec_augment(const MelTensor& mel, const SpecAugmentConfig& cfg, uint64_t rng_seed) {
  MelTensor out = mel;
  Rng rng(rng_seed);

  // Strip positions are channel-agnostic; every channel gets the same mask.
  std::vector<std::pair<int, int>> time_strips, freq_strips;
  for (int i = 0; i < cfg.time_masks; ++i) {
    const int start_max = std::max(mel.frames - cfg.time_width, 0);
    const int start = rng.uniform_int(start_max + 1);
    time_strips.emplace_back(start, std::min(cfg.time_width, mel.frames - start));
  }
  for (int i = 0; i < cfg.freq_masks; ++i) {
    const int start_max = std::max(mel.bands - cfg.freq_width, 0);
    const int start = rng.uniform_int(start_max + 1);
    freq_strips.emplace_back(start, std::min(cfg.freq_width, mel.bands - start));
  }

  const size_t plane = static_cast<size_t>(mel.bands) * mel.frames;
  for (int c = 0; c < mel.channels; ++c) {
    double mean = 0.0;
    for (size_t i = 0; i < plane; ++i) mean += mel.data[c * plane + i];
    const float fill = static_cast<float>(mean / static_cast<double>(plane));

    for (const auto& [start, width] : time_strips)
      for (int f = 0; f < mel.bands; ++f)
        for (int t = start; t < start + width; ++t) out.at(c, f, t) = fill;
    for (const auto& [start, width] : freq_strips)
      for (int f = start; f < start + width; ++f)
        for (int t = 0; t < mel.frames; ++t) out.at(c, f, t) = fill;
  }
  return out;
}

MelTensor fit_frames(const MelTensor& mel, int target_frames) {
  if (target_frames < 1) throw std::invalid_argument("fit_frames: target must be positive");
  if (mel.frames == target_frames) return mel;

  MelTensor out;
  out.channels = mel.channels;
  out.bands = mel.bands;
  out.frames = target_frames;
  out.sample_rate_hz = mel.sample_rate_hz;
  out.hop_samples = mel.hop_samples;
  out.data.resize(static_cast<size_t>(mel.channels) * mel.bands * target_frames);

  if (mel.frames > target_frames) {
    const int start = (mel.frames - target_frames) / 2;
    for (int c = 0; c < mel.channels; ++c)
      for (int f = 0; f < mel.bands; ++f)
        for (int t = 0; t < target_frames; ++t) out.at(c, f, t) = mel.at(c, f, start + t);
    return out;
  }

  // Reflect indices past the end: ... T-2, T-1, T-2, T-3 ...
  for (int c = 0; c < mel.channels; ++c)
    for (int f = 0; f < mel.bands; ++f)
      for (int t = 0; t < target_frames; ++t) {
        int src = t;
        if (mel.frames == 1) {
          src = 0;
        } else {
          const int period = 2 * (mel.frames - 1);
          src = t % period;
          if (src >= mel.frames) src = period - src;
        }
        out.at(c, f, t) = mel.at(c, f, src);
      }
  return out;
}

void melt_write(const std::string& path, const MelTensor& mel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("melt_write: cannot open " + path);
  const uint32_t version = 1;
  const uint32_t dims[3] = {static_cast<uint32_t>(mel.channels), static_cast<uint32_t>(mel.bands),
                            static_cast<uint32_t>(mel.frames)};
  out.write("MELT", 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(dims), 12);
  out.write(reinterpret_cast<const char*>(mel.data.data()),
            static_cast<std::streamsize>(mel.data.size() * sizeof(float)));
  if (!out) throw std::runtime_error("melt_write: write failed: " + path);
}

MelTensor melt_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("melt_read: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MELT", 4) != 0)
    throw std::runtime_error("melt_read: bad magic in " + path);
  uint32_t version = 0, dims[3] = {0, 0, 0};
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(dims), 12);
  if (version != 1) throw std::runtime_error("melt_read: unsupported version in " + path);

  MelTensor mel;
  mel.channels = static_cast<int>(dims[0]);
  mel.bands = static_cast<int>(dims[1]);
  mel.frames = static_cast<int>(dims[2]);
  mel.data.resize(static_cast<size_t>(dims[0]) * dims[1] * dims[2]);
  in.read(reinterpret_cast<char*>(mel.data.data()),
          static_cast<std::streamsize>(mel.data.size() * sizeof(float)));
  if (!in) throw std::runtime_error("melt_read: truncated file " + path);
  return mel;
}

}  // namespace mmer::frontend
