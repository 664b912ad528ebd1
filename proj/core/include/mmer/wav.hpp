#pragma once

#include <string>

#include "mmer/audio_types.hpp"

namespace mmer {

enum class WavEncoding { pcm16, pcm24, float32 };

// Little-endian RIFF/WAVE reader and writer covering the encodings the
// pipeline exchanges: PCM16, PCM24 and IEEE float32, mono or multi-channel.
// Unknown chunks are skipped on read.
MultiChannelAudio wav_read(const std::string& path);

void wav_write(const std::string& path, const MultiChannelAudio& audio,
               WavEncoding encoding = WavEncoding::float32);

inline void wav_write(const std::string& path, const AudioSignal& mono,
                      WavEncoding encoding = WavEncoding::float32) {
  wav_write(path, MultiChannelAudio::from_mono(mono, 1), encoding);
}

}  // namespace mmer
