#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mmer {

// Mono waveform. Simulation-side DSP runs in double; the ML frontend
// narrows to float at the feature boundary.
struct AudioSignal {
  int sample_rate_hz = 0;
  std::vector<double> samples;

  bool empty() const { return samples.empty(); }
  size_t size() const { return samples.size(); }
};

struct MultiChannelAudio {
  int sample_rate_hz = 0;
  std::vector<std::vector<double>> channels;

  size_t channel_count() const { return channels.size(); }
  size_t frame_count() const { return channels.empty() ? 0 : channels[0].size(); }

  void validate() const {
    if (channels.empty()) throw std::invalid_argument("MultiChannelAudio: no channels");
    const size_t n = channels[0].size();
    for (const auto& ch : channels)
      if (ch.size() != n)
        throw std::invalid_argument("MultiChannelAudio: channel lengths differ");
  }

  AudioSignal channel(size_t i) const {
    return AudioSignal{sample_rate_hz, channels.at(i)};
  }

  static MultiChannelAudio from_mono(const AudioSignal& mono, size_t c) {
    MultiChannelAudio out;
    out.sample_rate_hz = mono.sample_rate_hz;
    out.channels.assign(c, mono.samples);
    return out;
  }
};

}  // namespace mmer
