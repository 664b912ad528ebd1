#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmer/rng.hpp"
#include "mmer/synth.hpp"

using namespace mmer;
using namespace mmer::synth;

namespace {

acoustics::RirSet impulse_rirs(int channels, int delay, int sr = 16000) {
  acoustics::RirSet set;
  set.sample_rate_hz = sr;
  std::vector<double> h(delay + 1, 0.0);
  h[delay] = 1.0;
  set.rirs.assign(channels, h);
  return set;
}

AudioSignal random_signal(size_t n, uint64_t seed, int sr = 16000) {
  Rng rng(seed);
  AudioSignal s;
  s.sample_rate_hz = sr;
  s.samples.resize(n);
  for (auto& v : s.samples) v = rng.gauss();
  return s;
}

}  // namespace

TEST_CASE("convolve_rir with unit impulses reproduces the input") {
  const auto s = random_signal(200, 3);
  const auto out = convolve_rir(s, impulse_rirs(3, 0));
  REQUIRE(out.channel_count() == 3);
  for (const auto& ch : out.channels) {
    REQUIRE(ch.size() == s.samples.size());
    for (size_t i = 0; i < ch.size(); ++i) CHECK(ch[i] == doctest::Approx(s.samples[i]));
  }
}

TEST_CASE("convolve_rir with a delayed impulse shifts the input") {
  const auto s = random_signal(100, 4);
  const int k = 7;
  const auto out = convolve_rir(s, impulse_rirs(1, k));
  REQUIRE(out.channels[0].size() == s.samples.size() + k);
  for (int i = 0; i < k; ++i) CHECK(out.channels[0][i] == doctest::Approx(0.0));
  for (size_t i = 0; i < s.samples.size(); ++i)
    CHECK(out.channels[0][i + k] == doctest::Approx(s.samples[i]));
}

TEST_CASE("convolve_rir matches the O(n^2) oracle") {
  const auto s = random_signal(64, 11);
  Rng rng(12);
  acoustics::RirSet set;
  set.sample_rate_hz = 16000;
  set.rirs.assign(1, std::vector<double>(16));
  for (auto& v : set.rirs[0]) v = rng.gauss();

  const auto out = convolve_rir(s, set);
  REQUIRE(out.channels[0].size() == 64 + 16 - 1);
  // Independent nested-loop reference.
  for (size_t n = 0; n < out.channels[0].size(); ++n) {
    double acc = 0.0;
    for (size_t i = 0; i < s.samples.size(); ++i) {
      const size_t j = n - i;
      if (n >= i && j < set.rirs[0].size()) acc += s.samples[i] * set.rirs[0][j];
    }
    CHECK(std::abs(out.channels[0][n] - acc) < 1e-10);
  }
}

TEST_CASE("convolve_rir is linear in the input") {
  const auto s = random_signal(50, 21);
  auto scaled = s;
  for (auto& v : scaled.samples) v *= 2.5;
  Rng rng(22);
  acoustics::RirSet set;
  set.sample_rate_hz = 16000;
  set.rirs.assign(1, std::vector<double>(9));
  for (auto& v : set.rirs[0]) v = rng.gauss();

  const auto a = convolve_rir(s, set);
  const auto b = convolve_rir(scaled, set);
  for (size_t i = 0; i < a.channels[0].size(); ++i)
    CHECK(b.channels[0][i] == doctest::Approx(2.5 * a.channels[0][i]));
}

TEST_CASE("convolve_rir rejects sample-rate mismatch") {
  const auto s = random_signal(100, 1, 8000);
  CHECK_THROWS_AS(convolve_rir(s, impulse_rirs(1, 0, 16000)), std::invalid_argument);
}

TEST_CASE("ar1 with zero coefficient is the raw Gaussian draw") {
  const auto noise = ar1_noise(1000, 0.0, 5);
  Rng rng(5);
  for (double v : noise.samples) CHECK(v == rng.gauss());
}

TEST_CASE("ar1 variance matches the closed form") {
  // var = 1 / (1 - a^2) = 1/0.19 ~ 5.263 for a = 0.9
  const auto noise = ar1_noise(1000000, 0.9, 77);
  double sum = 0, sum2 = 0;
  for (double v : noise.samples) {
    sum += v;
    sum2 += v * v;
  }
  const double n = static_cast<double>(noise.samples.size());
  const double var = sum2 / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(1.0 / (1.0 - 0.81)).epsilon(0.05));
}

TEST_CASE("ar1 lag-1 autocorrelation approximates the coefficient") {
  const auto noise = ar1_noise(1000000, 0.9, 78);
  double num = 0, den = 0;
  for (size_t i = 1; i < noise.samples.size(); ++i) num += noise.samples[i] * noise.samples[i - 1];
  for (double v : noise.samples) den += v * v;
  CHECK(std::abs(num / den - 0.9) < 0.02);
}

TEST_CASE("ar1 rejects unstable coefficients and empty draws") {
  CHECK_THROWS_AS(ar1_noise(10, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(ar1_noise(10, -1.2, 0), std::invalid_argument);
  CHECK_THROWS_AS(ar1_noise(0, 0.5, 0), std::invalid_argument);
}

TEST_CASE("mix_at_snr hits the requested SNR exactly") {
  MultiChannelAudio rev;
  rev.sample_rate_hz = 16000;
  Rng rng(9);
  rev.channels.assign(3, {});
  for (auto& ch : rev.channels) {
    ch.resize(16000);
    for (auto& v : ch) v = 0.25 * rng.gauss();
  }

  for (double snr_db : {0.0, 20.0, -5.0}) {
    const auto mixed = mix_at_snr(rev, snr_db, 0.9, 1234);
    for (size_t c = 0; c < 3; ++c) {
      // Post-hoc oracle: reconstruct the noise component by subtraction.
      std::vector<double> noise(mixed.channels[c].size());
      for (size_t i = 0; i < noise.size(); ++i)
        noise[i] = mixed.channels[c][i] - rev.channels[c][i];
      const double measured =
          10.0 * std::log10(signal_power(rev.channels[c]) / signal_power(noise));
      CHECK(std::abs(measured - snr_db) < 0.01);
    }
  }
}

TEST_CASE("mix_at_snr at 20 dB scales noise power to signal/100") {
  MultiChannelAudio rev;
  rev.sample_rate_hz = 16000;
  Rng rng(10);
  rev.channels.assign(1, std::vector<double>(8000));
  for (auto& v : rev.channels[0]) v = rng.gauss();

  const auto mixed = mix_at_snr(rev, 20.0, 0.9, 5);
  std::vector<double> noise(8000);
  for (size_t i = 0; i < noise.size(); ++i) noise[i] = mixed.channels[0][i] - rev.channels[0][i];
  CHECK(signal_power(noise) ==
        doctest::Approx(signal_power(rev.channels[0]) / 100.0).epsilon(1e-9));
}

TEST_CASE("mix_at_snr noise is independent across channels") {
  MultiChannelAudio rev;
  rev.sample_rate_hz = 16000;
  rev.channels.assign(3, std::vector<double>(100000, 0.5));  // constant signal

  const auto mixed = mix_at_snr(rev, 0.0, 0.9, 99);
  std::vector<std::vector<double>> noise(3, std::vector<double>(100000));
  for (size_t c = 0; c < 3; ++c)
    for (size_t i = 0; i < 100000; ++i) noise[c][i] = mixed.channels[c][i] - 0.5;

  for (size_t a = 0; a < 3; ++a)
    for (size_t b = a + 1; b < 3; ++b) {
      double num = 0, da = 0, db = 0;
      for (size_t i = 0; i < 100000; ++i) {
        num += noise[a][i] * noise[b][i];
        da += noise[a][i] * noise[a][i];
        db += noise[b][i] * noise[b][i];
      }
      CHECK(std::abs(num / std::sqrt(da * db)) < 0.05);
    }
}

TEST_CASE("mix_at_snr rejects zero-power channels") {
  MultiChannelAudio rev;
  rev.sample_rate_hz = 16000;
  rev.channels.assign(1, std::vector<double>(100, 0.0));
  CHECK_THROWS_AS(mix_at_snr(rev, 20.0, 0.9, 0), std::invalid_argument);
}

TEST_CASE("synthesis is deterministic per seed") {
  MultiChannelAudio rev;
  rev.sample_rate_hz = 16000;
  rev.channels.assign(2, std::vector<double>(500, 0.3));
  const auto a = mix_at_snr(rev, 10.0, 0.9, 42);
  const auto b = mix_at_snr(rev, 10.0, 0.9, 42);
  CHECK(a.channels == b.channels);
  const auto c = mix_at_snr(rev, 10.0, 0.9, 43);
  CHECK(a.channels != c.channels);
}
