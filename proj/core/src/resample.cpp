#include "mmer/resample.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mmer::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr int kZeroCrossings = 16;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

}  // namespace

std::vector<double> resample(const std::vector<double>& x, int sr_in, int sr_out) {
  if (sr_in <= 0 || sr_out <= 0) throw std::invalid_argument("resample: rates must be positive");
  if (sr_in == sr_out || x.empty()) return x;

  const int g = std::gcd(sr_in, sr_out);
  const long up = sr_out / g;
  const long down = sr_in / g;

  // Prototype lowpass at the narrower Nyquist band, gain-compensated for
  // the zero insertion.
  const long n_taps = 2L * kZeroCrossings * std::max(up, down) + 1;
  const long delay = (n_taps - 1) / 2;
  const double fc = 0.5 / static_cast<double>(std::max(up, down));
  std::vector<double> h(n_taps);
  for (long j = 0; j < n_taps; ++j) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * j / static_cast<double>(n_taps - 1));
    h[j] = static_cast<double>(up) * w * 2.0 * fc * sinc(2.0 * fc * (j - delay));
  }

  const long in_len = static_cast<long>(x.size());
  const long out_len = (in_len * up + down - 1) / down;
  std::vector<double> y(out_len, 0.0);

  for (long n = 0; n < out_len; ++n) {
    const long t = n * down + delay;
    const long phase = t % up;
    const long anchor = (t - phase) / up;
    double acc = 0.0;
    for (long j = phase, k = 0; j < n_taps; j += up, ++k) {
      const long idx = anchor - k;
      if (idx < 0) break;
      if (idx < in_len) acc += h[j] * x[idx];
    }
    y[n] = acc;
  }
  return y;
}

AudioSignal resample(const AudioSignal& x, int sr_out) {
  return AudioSignal{sr_out, resample(x.samples, x.sample_rate_hz, sr_out)};
}

MultiChannelAudio resample(const MultiChannelAudio& x, int sr_out) {
  MultiChannelAudio out;
  out.sample_rate_hz = sr_out;
  out.channels.reserve(x.channels.size());
  for (const auto& ch : x.channels) out.channels.push_back(resample(ch, x.sample_rate_hz, sr_out));
  return out;
}

}  // namespace mmer::dsp
