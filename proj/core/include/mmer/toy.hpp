#pragma once

#include <cstdint>
#include <string>

#include "mmer/manifest.hpp"

namespace mmer::corpus {

// Synthetic audiovisual task with complementary modalities: the audio cue is
// a 400 vs 800 Hz tone in noise, the video cue is a bright square sweeping
// left-to-right vs right-to-left. The class is (audio_bit, video_bit), so
// either modality alone separates only 2 of the 4 classes (50% ceiling)
// while both together separate all of them.
struct ToyCorpusConfig {
  int sample_rate_hz = 16000;
  double clip_seconds = 0.6;
  int video_frames = 8;
  int video_size = 32;
  int actors = 10;
  double tone_amplitude = 0.3;
  double audio_noise_sigma = 0.067;  // ~10 dB tone-to-noise
  double video_noise = 12.0;         // u8 intensity jitter
  bool noiseless = false;
};

// Writes WAV + PCLP files plus manifest.jsonl under out_dir and returns the
// manifest. Split assignment is actor-exclusive at ratios (0.8, 0.1, 0.1).
UtteranceManifest generate_toy_corpus(const std::string& out_dir, int n_per_class,
                                      uint64_t rng_seed, const ToyCorpusConfig& cfg = {});

}  // namespace mmer::corpus
