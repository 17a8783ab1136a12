#include "lungdn/noise_forge.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <mutex>
#include <random>

#include "lungdn/errors.hpp"

namespace lungdn::noise {

std::string kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::wgn: return "WGN";
    case NoiseKind::pink: return "Pink";
    case NoiseKind::heart: return "Heart";
    case NoiseKind::heart_plus_hospital: return "HeartPlusHospital";
  }
  return "?";
}

NoiseKind parse_kind(const std::string& name) {
  std::string s;
  for (char c : name)
    if (c != '_' && c != '-' && c != '+') s.push_back(char(std::tolower(static_cast<unsigned char>(c))));
  if (s == "wgn" || s == "white") return NoiseKind::wgn;
  if (s == "pink") return NoiseKind::pink;
  if (s == "heart") return NoiseKind::heart;
  if (s == "heartplushospital" || s == "hearthospital") return NoiseKind::heart_plus_hospital;
  throw ConfigError("unknown noise kind '" + name + "' (expected WGN, Pink, Heart, HeartPlusHospital)");
}

std::vector<double> training_levels() { return {-10, -5, 0, 5, 10, 15}; }
std::vector<double> testing_levels() { return {-12, -10, -8, -5, -2, 0, 3, 5, 8, 10, 12, 15}; }

double mean_square(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / double(x.size());
}

double snr_db(std::span<const double> signal, std::span<const double> noise) {
  return 10.0 * std::log10(mean_square(signal) / mean_square(noise));
}

std::vector<double> wgn(std::size_t length, double power, std::uint64_t seed) {
  if (!(power > 0)) throw RangeError("noise power must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, std::sqrt(power));
  std::vector<double> out(length);
  for (auto& v : out) v = dist(rng);
  return out;
}

namespace {
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

std::vector<double> pink(std::size_t length, std::uint64_t seed) {
  if (length < 256) throw LengthError("pink noise needs at least 256 samples, got " + std::to_string(length));
  const std::size_t bins = length / 2 + 1;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  fftw_complex* spec = fftw_alloc_complex(bins);
  double* out = fftw_alloc_real(length);
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = dist(rng), im = dist(rng);
    const double amp = k == 0 ? 0.0 : 1.0 / std::sqrt(double(k));
    spec[k][0] = re * amp;
    // DC and (even-length) Nyquist bins of a real signal are real.
    spec[k][1] = (k == 0 || 2 * k == length) ? 0.0 : im * amp;
  }
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_c2r_1d(int(length), spec, out, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::vector<double> x(out, out + length);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(spec);
  fftw_free(out);

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= double(length);
  for (double& v : x) v -= mean;
  const double scale = 1.0 / std::sqrt(mean_square(x));
  for (double& v : x) v *= scale;
  return x;
}

std::vector<double> scale_noise_to_snr(std::span<const double> signal, std::span<const double> noise,
                                       double target_snr_db) {
  if (signal.size() != noise.size())
    throw LengthError("signal has " + std::to_string(signal.size()) + " samples, noise " + std::to_string(noise.size()));
  const double ps = mean_square(signal), pn = mean_square(noise);
  if (!(pn > 0)) throw DegenerateNoise("noise source is silent");
  const double sf = (ps / pn) * std::pow(10.0, -target_snr_db / 10.0);
  const double g = std::sqrt(sf);
  std::vector<double> out(noise.begin(), noise.end());
  for (double& v : out) v *= g;
  return out;
}

NoisePools NoisePools::from_clips(std::vector<audio::AudioClip> heart, std::vector<audio::AudioClip> hospital) {
  NoisePools p;
  for (auto& c : heart) p.heart.push_back(audio::resample(c, corpus::kSampleRate));
  for (auto& c : hospital) p.hospital.push_back(audio::resample(c, corpus::kSampleRate));
  return p;
}

namespace {

std::vector<double> fit_length(const std::vector<double>& src, std::size_t length, std::mt19937_64& rng) {
  if (src.empty()) throw DegenerateNoise("empty noise clip");
  std::vector<double> out;
  out.reserve(length);
  if (src.size() <= length) {
    while (out.size() < length) out.insert(out.end(), src.begin(), src.begin() + std::min(src.size(), length - out.size()));
  } else {
    const std::size_t offset = std::size_t(rng() % (src.size() - length + 1));
    out.assign(src.begin() + offset, src.begin() + offset + length);
  }
  return out;
}

const audio::AudioClip& draw(const std::vector<audio::AudioClip>& pool, const char* what, std::mt19937_64& rng) {
  if (pool.empty()) throw PoolError(std::string(what) + " pool is empty");
  return pool[rng() % pool.size()];
}

}  // namespace

DrawnNoise get_noise(NoiseKind kind, const NoisePools& pools, std::uint64_t seed, std::size_t length) {
  std::mt19937_64 rng(seed);
  DrawnNoise out;
  if (kind == NoiseKind::heart) {
    const auto& h = draw(pools.heart, "heart", rng);
    out.samples = fit_length(h.samples, length, rng);
    out.source_ids = {h.source_id};
  } else if (kind == NoiseKind::heart_plus_hospital) {
    const auto& h = draw(pools.heart, "heart", rng);
    const auto& s = draw(pools.hospital, "hospital", rng);
    auto hv = fit_length(h.samples, length, rng);
    auto sv = fit_length(s.samples, length, rng);
    out.samples.resize(length);
    for (std::size_t i = 0; i < length; ++i) out.samples[i] = 0.7 * hv[i] + 0.3 * sv[i];
    out.source_ids = {h.source_id, s.source_id};
  } else {
    throw ConfigError("get_noise draws from clip pools; " + kind_name(kind) + " is synthesized");
  }
  return out;
}

std::uint64_t stream_seed(std::uint64_t seed, const std::string& seg_id, NoiseKind kind, double level_db) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : seg_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  const auto level = std::uint32_t(std::int32_t(std::lround(level_db * 1000.0)));
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(h), std::uint32_t(h >> 32),
                    std::uint32_t(kind), level};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return std::uint64_t(words[0]) << 32 | words[1];
}

std::string noisy_id(const std::string& seg_id, NoiseKind kind, double level_db) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", level_db);
  return seg_id + "_" + kind_name(kind) + "_" + buf + "dB";
}

MixResult mix(const corpus::Segment& clean, const NoiseSpec& spec, const NoisePools& pools) {
  const auto& x = clean.samples;
  const double ps = mean_square(x);
  if (!(ps > 0)) throw EmptyAudio("clean segment '" + clean.id() + "' is silent");
  MixResult r;
  switch (spec.kind) {
    case NoiseKind::wgn:
      r.scaled_noise = wgn(x.size(), ps * std::pow(10.0, -spec.target_snr_db / 10.0), spec.seed);
      break;
    case NoiseKind::pink:
      r.scaled_noise = scale_noise_to_snr(x, pink(x.size(), spec.seed), spec.target_snr_db);
      break;
    default: {
      auto drawn = get_noise(spec.kind, pools, spec.seed, x.size());
      r.scaled_noise = scale_noise_to_snr(x, drawn.samples, spec.target_snr_db);
      r.record.noise_source_ids = std::move(drawn.source_ids);
    }
  }
  r.noisy.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r.noisy[i] = x[i] + r.scaled_noise[i];
  r.record.noisy_id = noisy_id(clean.id(), spec.kind, spec.target_snr_db);
  r.record.clean_seg_id = clean.id();
  r.record.kind = spec.kind;
  r.record.target_snr_db = spec.target_snr_db;
  r.record.seed = spec.seed;
  r.record.realized_snr_db = snr_db(x, r.scaled_noise);
  if (!std::isfinite(r.record.realized_snr_db)) throw DegenerateNoise("realized SNR is not finite for " + clean.id());
  return r;
}

nlohmann::ordered_json MixRecord::to_json() const {
  return {{"noisy_id", noisy_id},
          {"clean_seg_id", clean_seg_id},
          {"split", split},
          {"kind", kind_name(kind)},
          {"target_snr_db", target_snr_db},
          {"seed", seed},
          {"noise_source_ids", noise_source_ids},
          {"realized_snr_db", realized_snr_db}};
}

MixRecord MixRecord::from_json(const nlohmann::json& j) {
  MixRecord r;
  try {
    r.noisy_id = j.at("noisy_id").get<std::string>();
    r.clean_seg_id = j.at("clean_seg_id").get<std::string>();
    r.split = j.value("split", std::string());
    r.kind = parse_kind(j.at("kind").get<std::string>());
    r.target_snr_db = j.at("target_snr_db").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.noise_source_ids = j.value("noise_source_ids", std::vector<std::string>{});
    r.realized_snr_db = j.at("realized_snr_db").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("bad mix record: ") + e.what());
  }
  return r;
}

}  // namespace lungdn::noise
