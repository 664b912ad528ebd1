#pragma once

#include <vector>

#include "mmer/audio_types.hpp"

namespace mmer::dsp {

// Polyphase rational resampler built on a Hann-windowed sinc prototype.
// Cutoff sits at the narrower of the two Nyquist bands; zero-padding
// boundary semantics.
std::vector<double> resample(const std::vector<double>& x, int sr_in, int sr_out);

AudioSignal resample(const AudioSignal& x, int sr_out);
MultiChannelAudio resample(const MultiChannelAudio& x, int sr_out);

}  // namespace mmer::dsp
