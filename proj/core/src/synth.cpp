#include "mmer/synth.hpp"

#include <cmath>
#include <stdexcept>

#include "mmer/fft.hpp"
#include "mmer/rng.hpp"

namespace mmer::synth {

MultiChannelAudio convolve_rir(const AudioSignal& clean, const acoustics::RirSet& rirs) {
  if (clean.sample_rate_hz != rirs.sample_rate_hz)
    throw std::invalid_argument("convolve_rir: sample rate mismatch (" +
                                std::to_string(clean.sample_rate_hz) + " vs " +
                                std::to_string(rirs.sample_rate_hz) + ")");
  if (rirs.rirs.empty()) throw std::invalid_argument("convolve_rir: empty RIR set");

  MultiChannelAudio out;
  out.sample_rate_hz = clean.sample_rate_hz;
  out.channels.reserve(rirs.channel_count());
  for (const auto& h : rirs.rirs) out.channels.push_back(dsp::convolve(clean.samples, h));
  return out;
}

AudioSignal ar1_noise(size_t n_samples, double coeff, uint64_t rng_seed) {
  if (n_samples == 0) throw std::invalid_argument("ar1_noise: n_samples must be positive");
  if (std::abs(coeff) >= 1.0)
    throw std::invalid_argument("ar1_noise: |coeff| must be < 1 (unstable filter)");

  Rng rng(rng_seed);
  AudioSignal out;
  out.samples.resize(n_samples);
  double prev = 0.0;
  for (size_t i = 0; i < n_samples; ++i) {
    prev = coeff * prev + rng.gauss();
    out.samples[i] = prev;
  }
  return out;
}

double signal_power(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

MultiChannelAudio mix_at_snr(const MultiChannelAudio& reverberant, double snr_db,
                             double noise_coeff, uint64_t rng_seed) {
  reverberant.validate();
  MultiChannelAudio out = reverberant;
  Rng master(rng_seed);
  for (size_t c = 0; c < out.channels.size(); ++c) {
    auto& ch = out.channels[c];
    const double p_signal = signal_power(ch);
    if (p_signal <= 0.0)
      throw std::invalid_argument("mix_at_snr: channel " + std::to_string(c) + " has zero power");
    const auto noise =
        ar1_noise(ch.size(), noise_coeff, master.derive(c).next_u64());
    const double p_noise = signal_power(noise.samples);
    const double gain = std::sqrt(p_signal / (p_noise * std::pow(10.0, snr_db / 10.0)));
    for (size_t i = 0; i < ch.size(); ++i) ch[i] += gain * noise.samples[i];
  }
  return out;
}

}  // namespace mmer::synth
