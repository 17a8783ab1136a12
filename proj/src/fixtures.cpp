#include "lungdn/fixtures.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "lungdn/errors.hpp"

namespace lungdn::fixtures {

namespace {
constexpr double kPi = std::numbers::pi;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t salt) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), salt};
  return std::mt19937_64(seq);
}

std::size_t sample_count(double seconds, int sample_rate) {
  if (!(seconds > 0) || sample_rate <= 0) throw RangeError("fixture duration and rate must be positive");
  return std::size_t(std::llround(seconds * sample_rate));
}

void scale_peak(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0)
    for (double& v : x) v *= peak / m;
}

// Inspiration, expiration, pause within one breathing cycle (u in [0, 1)).
double breath_envelope(double u) {
  if (u < 0.4) return std::pow(std::sin(kPi * u / 0.4), 2);
  if (u < 0.9) return 0.6 * std::pow(std::sin(kPi * (u - 0.4) / 0.5), 2);
  return 0.0;
}
}  // namespace

audio::AudioClip lung_clip(const std::string& id, double seconds, int sample_rate, std::uint64_t seed) {
  const std::size_t n = sample_count(seconds, sample_rate);
  const double fs = sample_rate;
  auto rng = make_rng(seed, 1);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> uni;

  audio::AudioClip base{std::vector<double>(n), sample_rate, id};
  for (double& v : base.samples) v = gauss(rng);
  base = audio::bandpass(base, audio::BandpassSpec::for_rate(sample_rate, 100.0, 1000.0, 2));

  const double period = 2.5 + 1.5 * uni(rng);
  const double phase = uni(rng);
  std::vector<double> env(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = std::fmod(double(i) / fs / period + phase, 1.0);
    env[i] = 0.03 + breath_envelope(u);
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = env[i] * base.samples[i];

  double rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / double(n));

  // Crackles: short decaying oscillations, mostly during inspiration.
  const std::size_t crackles = std::size_t(seconds * 3.0 * uni(rng));
  for (std::size_t c = 0; c < crackles; ++c) {
    const std::size_t at = std::size_t(uni(rng) * double(n));
    const double f = 200.0 + 400.0 * uni(rng), tau = 0.002, amp = 3.0 * rms * (0.5 + uni(rng));
    for (std::size_t k = 0; k < std::size_t(0.015 * fs) && at + k < n; ++k) {
      const double t = double(k) / fs;
      x[at + k] += amp * std::exp(-t / tau) * std::sin(2 * kPi * f * t);
    }
  }
  // Occasional expiratory wheeze.
  if (uni(rng) < 0.4) {
    const double f0 = 250.0 + 350.0 * uni(rng), vib = 3.0 + 4.0 * uni(rng);
    double ph = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = std::fmod(double(i) / fs / period + phase, 1.0);
      ph += 2 * kPi * f0 * (1.0 + 0.02 * std::sin(2 * kPi * vib * double(i) / fs)) / fs;
      if (u >= 0.45 && u < 0.85) x[i] += 1.5 * rms * std::pow(std::sin(kPi * (u - 0.45) / 0.4), 2) * std::sin(ph);
    }
  }
  scale_peak(x, 0.9);
  return {std::move(x), sample_rate, id};
}

audio::AudioClip heart_clip(const std::string& id, double seconds, int sample_rate, std::uint64_t seed) {
  const std::size_t n = sample_count(seconds, sample_rate);
  const double fs = sample_rate;
  auto rng = make_rng(seed, 2);
  std::uniform_real_distribution<double> uni;
  const double beat = 60.0 / (60.0 + 40.0 * uni(rng));
  const double f1 = 35.0 + 30.0 * uni(rng), f2 = 60.0 + 60.0 * uni(rng);
  std::vector<double> x(n, 0.0);
  auto thump = [&](double centre, double f, double width, double amp) {
    const long lo = std::max(0L, long((centre - 4 * width) * fs)), hi = std::min(long(n), long((centre + 4 * width) * fs));
    for (long i = lo; i < hi; ++i) {
      const double t = double(i) / fs - centre;
      x[std::size_t(i)] += amp * std::exp(-0.5 * t * t / (width * width)) * std::cos(2 * kPi * f * t);
    }
  };
  for (double t0 = beat * uni(rng); t0 < seconds + beat; t0 += beat * (0.97 + 0.06 * uni(rng))) {
    thump(t0, f1, 0.025, 1.0);
    thump(t0 + 0.32 * beat, f2, 0.018, 0.7);
  }
  scale_peak(x, 0.9);
  return {std::move(x), sample_rate, id};
}

audio::AudioClip hospital_clip(const std::string& id, double seconds, int sample_rate, std::uint64_t seed) {
  const std::size_t n = sample_count(seconds, sample_rate);
  const double fs = sample_rate;
  auto rng = make_rng(seed, 3);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> uni;
  const double beep_f = 800.0 + 800.0 * uni(rng), beep_every = 0.8 + 1.2 * uni(rng);
  std::vector<double> x(n);
  double rumble = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rumble = 0.995 * rumble + 0.05 * gauss(rng);
    const double t = double(i) / fs;
    const bool beeping = std::fmod(t, beep_every) < 0.15;
    x[i] = rumble + 0.05 * gauss(rng) + (beeping ? 0.3 * std::sin(2 * kPi * beep_f * t) : 0.0);
  }
  scale_peak(x, 0.9);
  return {std::move(x), sample_rate, id};
}

nlohmann::json FixtureConfig::to_json() const {
  return {{"lung_clips", lung_clips},     {"heart_clips", heart_clips}, {"hospital_clips", hospital_clips},
          {"min_seconds", min_seconds},   {"max_seconds", max_seconds}, {"seed", seed}};
}

void write_fixture_set(const std::filesystem::path& out_dir, const FixtureConfig& cfg) {
  if (!(cfg.min_seconds > 0) || cfg.max_seconds < cfg.min_seconds) throw ConfigError("bad fixture duration range");
  auto rng = make_rng(cfg.seed, 0);
  std::uniform_real_distribution<double> uni;
  auto duration = [&] { return cfg.min_seconds + (cfg.max_seconds - cfg.min_seconds) * uni(rng); };
  auto name = [](const char* stem, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%03zu", stem, i);
    return std::string(buf);
  };
  for (const char* d : {"lung", "heart", "hospital"}) std::filesystem::create_directories(out_dir / d);
  for (std::size_t i = 0; i < cfg.lung_clips; ++i) {
    const auto id = name("lung", i);
    const double seconds = duration();
    const auto seed = rng();
    audio::write_wav(lung_clip(id, seconds, i % 2 ? 4000 : 8000, seed), out_dir / "lung" / (id + ".wav"));
  }
  for (std::size_t i = 0; i < cfg.heart_clips; ++i) {
    const auto id = name("heart", i);
    const double seconds = duration();
    const auto seed = rng();
    audio::write_wav(heart_clip(id, seconds, 8000, seed), out_dir / "heart" / (id + ".wav"));
  }
  for (std::size_t i = 0; i < cfg.hospital_clips; ++i) {
    const auto id = name("hospital", i);
    const double seconds = duration();
    const auto seed = rng();
    audio::write_wav(hospital_clip(id, seconds, 8000, seed), out_dir / "hospital" / (id + ".wav"));
  }
}

}  // namespace lungdn::fixtures
