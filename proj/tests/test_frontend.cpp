#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "mmer/mel.hpp"
#include "mmer/rng.hpp"

using namespace mmer;
using namespace mmer::frontend;

namespace {

MultiChannelAudio tone(double freq, double seconds, int channels = 1, int sr = 16000) {
  MultiChannelAudio audio;
  audio.sample_rate_hz = sr;
  const size_t n = static_cast<size_t>(seconds * sr);
  audio.channels.assign(channels, std::vector<double>(n));
  for (auto& ch : audio.channels)
    for (size_t i = 0; i < n; ++i) ch[i] = std::sin(2.0 * M_PI * freq * i / sr);
  return audio;
}

MelTensor random_mel(int c, int f, int t, uint64_t seed) {
  MelTensor mel;
  mel.channels = c;
  mel.bands = f;
  mel.frames = t;
  mel.data.resize(static_cast<size_t>(c) * f * t);
  Rng rng(seed);
  for (auto& v : mel.data) v = static_cast<float>(rng.uniform(-4.0, 4.0));
  return mel;
}

}  // namespace

TEST_CASE("framing arithmetic: 16000 samples, win 1024, hop 320 -> 47 frames") {
  MultiChannelAudio audio;
  audio.sample_rate_hz = 16000;
  audio.channels.assign(1, std::vector<double>(16000, 0.0));
  const auto mel = mel_spectrogram(audio, MelConfig{});
  CHECK(mel.frames == 1 + (16000 - 1024) / 320);
  CHECK(mel.frames == 47);
  CHECK(mel.bands == 64);
  CHECK(mel.channels == 1);
}

TEST_CASE("silence maps to the log floor") {
  MultiChannelAudio audio;
  audio.sample_rate_hz = 16000;
  audio.channels.assign(2, std::vector<double>(4000, 0.0));
  const auto mel = mel_spectrogram(audio, MelConfig{});
  const float expected = std::log(1e-10f);
  for (float v : mel.data) CHECK(v == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("a 1 kHz tone peaks in the band whose center is nearest 1 kHz") {
  const MelConfig cfg;
  const auto centers = mel_center_frequencies(cfg);
  int expected_band = 0;
  for (size_t f = 1; f < centers.size(); ++f)
    if (std::abs(centers[f] - 1000.0) < std::abs(centers[expected_band] - 1000.0))
      expected_band = static_cast<int>(f);

  const auto mel = mel_spectrogram(tone(1000.0, 1.0), cfg);
  for (int t = 0; t < mel.frames; ++t) {
    int argmax = 0;
    for (int f = 1; f < mel.bands; ++f)
      if (mel.at(0, f, t) > mel.at(0, argmax, t)) argmax = f;
    CHECK(argmax == expected_band);
  }
}

TEST_CASE("mel is channel-separable") {
  auto audio = tone(500.0, 0.5, 2);
  // Make channel 1 different.
  for (size_t i = 0; i < audio.channels[1].size(); ++i)
    audio.channels[1][i] = std::sin(2.0 * M_PI * 2000.0 * i / 16000.0);

  const auto joint = mel_spectrogram(audio, MelConfig{});
  MultiChannelAudio solo0{16000, {audio.channels[0]}};
  MultiChannelAudio solo1{16000, {audio.channels[1]}};
  const auto m0 = mel_spectrogram(solo0, MelConfig{});
  const auto m1 = mel_spectrogram(solo1, MelConfig{});

  for (int f = 0; f < joint.bands; ++f)
    for (int t = 0; t < joint.frames; ++t) {
      CHECK(joint.at(0, f, t) == m0.at(0, f, t));
      CHECK(joint.at(1, f, t) == m1.at(0, f, t));
    }
}

TEST_CASE("mel rejects too-short audio") {
  MultiChannelAudio audio;
  audio.sample_rate_hz = 16000;
  audio.channels.assign(1, std::vector<double>(512, 0.1));
  CHECK_THROWS_AS(mel_spectrogram(audio, MelConfig{}), std::invalid_argument);
}

TEST_CASE("average_channels equals the elementwise mean") {
  const auto mel = random_mel(3, 8, 10, 42);
  const auto avg = average_channels(mel);
  REQUIRE(avg.channels == 1);
  for (int f = 0; f < 8; ++f)
    for (int t = 0; t < 10; ++t) {
      const float expected = (mel.at(0, f, t) + mel.at(1, f, t) + mel.at(2, f, t)) / 3.0f;
      CHECK(avg.at(0, f, t) == doctest::Approx(expected).epsilon(1e-6));
    }
}

TEST_CASE("average_channels identities") {
  SUBCASE("identical channels pass through") {
    auto mel = random_mel(1, 4, 6, 1);
    MelTensor tripled;
    tripled.channels = 3;
    tripled.bands = 4;
    tripled.frames = 6;
    for (int c = 0; c < 3; ++c)
      tripled.data.insert(tripled.data.end(), mel.data.begin(), mel.data.end());
    const auto avg = average_channels(tripled);
    for (size_t i = 0; i < mel.data.size(); ++i)
      CHECK(avg.data[i] == doctest::Approx(mel.data[i]));
  }
  SUBCASE("a and -a cancel") {
    auto mel = random_mel(1, 4, 6, 2);
    MelTensor pair;
    pair.channels = 2;
    pair.bands = 4;
    pair.frames = 6;
    pair.data = mel.data;
    for (float v : mel.data) pair.data.push_back(-v);
    const auto avg = average_channels(pair);
    for (float v : avg.data) CHECK(v == doctest::Approx(0.0f));
  }
}

TEST_CASE("spec_augment masks the right number of cells with the channel mean") {
  const auto mel = random_mel(2, 64, 500, 7);
  const auto aug = spec_augment(mel, 99);

  // Per-channel fill value is the pre-mask mean.
  for (int c = 0; c < 2; ++c) {
    double mean = 0;
    const size_t plane = static_cast<size_t>(64) * 500;
    for (size_t i = 0; i < plane; ++i) mean += mel.data[c * plane + i];
    const float fill = static_cast<float>(mean / plane);

    // Identify masked rows/columns and verify bounds: at most 4*64 frames
    // and 2*8 bands.
    std::vector<bool> frame_masked(500, true), band_masked(64, true);
    int changed_cells = 0;
    for (int f = 0; f < 64; ++f)
      for (int t = 0; t < 500; ++t) {
        const bool same = aug.at(c, f, t) == mel.at(c, f, t);
        if (!same) {
          ++changed_cells;
          CHECK(aug.at(c, f, t) == doctest::Approx(fill));
        }
      }
    CHECK(changed_cells > 0);

    for (int t = 0; t < 500; ++t) {
      bool whole_column = true;
      for (int f = 0; f < 64; ++f)
        if (aug.at(c, f, t) != fill) whole_column = false;
      frame_masked[t] = whole_column;
    }
    for (int f = 0; f < 64; ++f) {
      bool whole_row = true;
      for (int t = 0; t < 500; ++t)
        if (aug.at(c, f, t) != fill) whole_row = false;
      band_masked[f] = whole_row;
    }
    const auto masked_frames = std::count(frame_masked.begin(), frame_masked.end(), true);
    const auto masked_bands = std::count(band_masked.begin(), band_masked.end(), true);
    CHECK(masked_frames <= 4 * 64);
    CHECK(masked_frames >= 64);  // at least one full strip fits in T=500
    CHECK(masked_bands <= 2 * 8);
  }
}

TEST_CASE("spec_augment masks identically across channels") {
  const auto mel = random_mel(3, 64, 200, 8);
  const auto aug = spec_augment(mel, 5);
  for (int f = 0; f < 64; ++f)
    for (int t = 0; t < 200; ++t) {
      const bool m0 = aug.at(0, f, t) != mel.at(0, f, t);
      const bool m1 = aug.at(1, f, t) != mel.at(1, f, t);
      const bool m2 = aug.at(2, f, t) != mel.at(2, f, t);
      CHECK(m0 == m1);
      CHECK(m0 == m2);
    }
}

TEST_CASE("spec_augment clamps when the clip is shorter than a strip") {
  const auto mel = random_mel(1, 64, 32, 9);  // T < 64
  const auto aug = spec_augment(mel, 1);
  // Whole time axis masked: every cell in un-frequency-masked rows equals
  // the fill; simpler check: every column is entirely fill.
  double mean = 0;
  for (float v : mel.data) mean += v;
  const float fill = static_cast<float>(mean / mel.data.size());
  for (int t = 0; t < 32; ++t)
    for (int f = 0; f < 64; ++f) CHECK(aug.at(0, f, t) == doctest::Approx(fill));
}

TEST_CASE("spec_augment leaves unmasked cells bit-identical and is seeded") {
  const auto mel = random_mel(1, 64, 300, 10);
  const auto a = spec_augment(mel, 4);
  const auto b = spec_augment(mel, 4);
  CHECK(a.data == b.data);

  int untouched = 0;
  for (size_t i = 0; i < mel.data.size(); ++i)
    if (a.data[i] == mel.data[i]) ++untouched;
  CHECK(untouched > 0);
}

TEST_CASE("fit_frames crops centrally and reflect-pads") {
  auto mel = random_mel(1, 2, 10, 11);
  SUBCASE("crop") {
    const auto out = fit_frames(mel, 6);
    REQUIRE(out.frames == 6);
    for (int f = 0; f < 2; ++f)
      for (int t = 0; t < 6; ++t) CHECK(out.at(0, f, t) == mel.at(0, f, t + 2));
  }
  SUBCASE("pad reflects") {
    const auto out = fit_frames(mel, 14);
    REQUIRE(out.frames == 14);
    for (int f = 0; f < 2; ++f) {
      for (int t = 0; t < 10; ++t) CHECK(out.at(0, f, t) == mel.at(0, f, t));
      CHECK(out.at(0, f, 10) == mel.at(0, f, 8));
      CHECK(out.at(0, f, 11) == mel.at(0, f, 7));
      CHECK(out.at(0, f, 12) == mel.at(0, f, 6));
      CHECK(out.at(0, f, 13) == mel.at(0, f, 5));
    }
  }
}

TEST_CASE("MELT cache round-trips byte-identically") {
  const auto mel = random_mel(3, 64, 47, 12);
  namespace fs = std::filesystem;
  const auto p1 = (fs::temp_directory_path() / "mmer_melt_1.bin").string();
  const auto p2 = (fs::temp_directory_path() / "mmer_melt_2.bin").string();
  melt_write(p1, mel);
  const auto back = melt_read(p1);
  CHECK(back.channels == 3);
  CHECK(back.bands == 64);
  CHECK(back.frames == 47);
  CHECK(back.data == mel.data);
  melt_write(p2, back);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  fs::remove(p1);
  fs::remove(p2);
}
