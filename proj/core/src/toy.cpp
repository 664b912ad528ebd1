#include "mmer/toy.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "mmer/clip.hpp"
#include "mmer/rng.hpp"
#include "mmer/wav.hpp"

namespace mmer::corpus {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

AudioSignal make_tone_clip(int audio_bit, const ToyCorpusConfig& cfg, Rng& rng) {
  const double freq = audio_bit == 0 ? 400.0 : 800.0;
  const size_t n = static_cast<size_t>(cfg.clip_seconds * cfg.sample_rate_hz);
  const double phase = rng.uniform(0.0, kTwoPi);
  const double sigma = cfg.noiseless ? 0.0 : cfg.audio_noise_sigma;

  AudioSignal out;
  out.sample_rate_hz = cfg.sample_rate_hz;
  out.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / cfg.sample_rate_hz;
    out.samples[i] = cfg.tone_amplitude * std::sin(kTwoPi * freq * t + phase) +
                     (sigma > 0.0 ? sigma * rng.gauss() : 0.0);
  }
  return out;
}

VideoClip make_square_clip(int video_bit, const ToyCorpusConfig& cfg, Rng& rng) {
  const int size = cfg.video_size;
  const int square = std::max(size / 4, 2);
  const int frames = cfg.video_frames;

  VideoClip clip;
  clip.frame_count = frames;
  clip.height = size;
  clip.width = size;
  clip.rgb.assign(clip.frame_bytes() * frames, 0);

  // bit 0 sweeps left->right starting near the left edge; bit 1 the mirror.
  const int travel = size - square - 2;
  const int jitter = rng.uniform_int(3);
  const int y0 = (size - square) / 2 + rng.uniform_int(5) - 2;
  const double noise = cfg.noiseless ? 0.0 : cfg.video_noise;

  for (int f = 0; f < frames; ++f) {
    const double progress = frames > 1 ? static_cast<double>(f) / (frames - 1) : 0.0;
    const double pos = video_bit == 0 ? progress : 1.0 - progress;
    const int x0 = 1 + jitter / 2 + static_cast<int>(std::lround(pos * (travel - jitter)));
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const bool inside = y >= y0 && y < y0 + square && x >= x0 && x < x0 + square;
        double v = inside ? 230.0 : 20.0;
        if (noise > 0.0) v += noise * (rng.uniform() - 0.5) * 2.0;
        const auto u = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
        for (int c = 0; c < 3; ++c) clip.at(f, y, x, c) = u;
      }
    }
  }
  return clip;
}

}  // namespace

UtteranceManifest generate_toy_corpus(const std::string& out_dir, int n_per_class,
                                      uint64_t rng_seed, const ToyCorpusConfig& cfg) {
  if (n_per_class < 4) throw std::invalid_argument("generate_toy_corpus: n_per_class must be >= 4");
  std::filesystem::create_directories(out_dir);

  std::vector<int> actor_ids(cfg.actors);
  for (int i = 0; i < cfg.actors; ++i) actor_ids[i] = i + 1;
  Rng master(rng_seed);
  const auto splits = build_split(actor_ids, {0.8, 0.1, 0.1}, master.next_u64());

  UtteranceManifest manifest;
  int counter = 0;
  for (int cls = 0; cls < 4; ++cls) {
    const int audio_bit = cls >> 1;
    const int video_bit = cls & 1;
    for (int i = 0; i < n_per_class; ++i, ++counter) {
      Rng rng = master.derive(static_cast<uint64_t>(counter) + 1);
      const int actor = actor_ids[counter % cfg.actors];

      char id[32];
      std::snprintf(id, sizeof(id), "toy_%d_%04d", cls, i);
      const std::string wav_path = out_dir + "/" + id + ".wav";
      const std::string clip_path = out_dir + "/" + id + ".pclp";

      wav_write(wav_path, make_tone_clip(audio_bit, cfg, rng), WavEncoding::float32);
      pclp_write(clip_path, make_square_clip(video_bit, cfg, rng));

      ManifestEntry entry;
      entry.utterance_id = id;
      entry.actor_id = actor;
      entry.label = emotion_from_index(cls);
      entry.clean_audio_path = wav_path;
      entry.video_clip_path = clip_path;
      entry.split = splits.at(actor);
      manifest.entries.push_back(std::move(entry));
    }
  }

  manifest_write(out_dir + "/manifest.jsonl", manifest);
  return manifest;
}

}  // namespace mmer::corpus
