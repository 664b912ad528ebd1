#pragma once

#include <cstdint>

#include "mmer/audio_types.hpp"
#include "mmer/rir.hpp"

namespace mmer::synth {

// Full linear convolution of the clean source with each channel's RIR;
// output channels have length len(s) + len(h) - 1.
MultiChannelAudio convolve_rir(const AudioSignal& clean, const acoustics::RirSet& rirs);

// White unit Gaussian shaped by h[n] = coeff * h[n-1] + x[n].
AudioSignal ar1_noise(size_t n_samples, double coeff, uint64_t rng_seed);

// Adds an independent AR(1) noise realization per channel, scaled so the
// measured per-channel SNR equals snr_db exactly (up to floating point).
MultiChannelAudio mix_at_snr(const MultiChannelAudio& reverberant, double snr_db,
                             double noise_coeff, uint64_t rng_seed);

double signal_power(const std::vector<double>& x);

}  // namespace mmer::synth
