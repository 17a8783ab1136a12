#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lungdn/segmenter.hpp"
#include "lungdn/signal_io.hpp"

namespace lungdn::noise {

enum class NoiseKind { wgn, pink, heart, heart_plus_hospital };

/// "WGN", "Pink", "Heart", "HeartPlusHospital".
std::string kind_name(NoiseKind kind);
/// Accepts the names above case-insensitively. Throws ConfigError.
NoiseKind parse_kind(const std::string& name);

std::vector<double> training_levels();
std::vector<double> testing_levels();

double mean_square(std::span<const double> x);
/// 10 log10(P_signal / P_noise) from the two vectors' mean squares.
double snr_db(std::span<const double> signal, std::span<const double> noise);

/// i.i.d. Gaussian noise with standard deviation sqrt(power).
std::vector<double> wgn(std::size_t length, double power, std::uint64_t seed);

/// Zero-mean noise with 1/f power spectral density and unit mean square,
/// synthesized by shaping a Gaussian spectrum. Throws LengthError below 256.
std::vector<double> pink(std::size_t length, std::uint64_t seed);

/// Scales `noise` so that 10 log10(P_signal / P_scaled) equals the target.
/// Throws DegenerateNoise for a silent noise vector.
std::vector<double> scale_noise_to_snr(std::span<const double> signal, std::span<const double> noise,
                                       double target_snr_db);

/// Heart and hospital noise sources, resampled to 8 kHz once.
struct NoisePools {
  std::vector<audio::AudioClip> heart;
  std::vector<audio::AudioClip> hospital;

  static NoisePools from_clips(std::vector<audio::AudioClip> heart, std::vector<audio::AudioClip> hospital);
};

struct DrawnNoise {
  std::vector<double> samples;
  std::vector<std::string> source_ids;
};

/// Heart: one clip drawn uniformly from the pool. HeartPlusHospital:
/// 0.7 * heart + 0.3 * hospital. Short clips are looped, long clips cropped
/// at a seeded offset. Throws PoolError on an empty pool.
DrawnNoise get_noise(NoiseKind kind, const NoisePools& pools, std::uint64_t seed,
                     std::size_t length = corpus::kSegmentLength);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::wgn;
  double target_snr_db = 0.0;
  std::uint64_t seed = 0;
};

struct MixRecord {
  std::string noisy_id;
  std::string clean_seg_id;
  std::string split;
  NoiseKind kind = NoiseKind::wgn;
  double target_snr_db = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> noise_source_ids;
  double realized_snr_db = 0.0;

  nlohmann::ordered_json to_json() const;
  static MixRecord from_json(const nlohmann::json& j);
};

struct MixResult {
  std::vector<double> noisy;
  std::vector<double> scaled_noise;
  MixRecord record;
};

/// clean + scaled noise. WGN takes its standard deviation from the nominal
/// noise power, so its realized SNR is statistical; the other kinds scale by
/// the realized noise power and hit the target exactly. Throws EmptyAudio
/// for a silent clean segment.
MixResult mix(const corpus::Segment& clean, const NoiseSpec& spec, const NoisePools& pools = {});

/// Independent seed for one (segment, kind, level) mix.
std::uint64_t stream_seed(std::uint64_t seed, const std::string& seg_id, NoiseKind kind, double level_db);

/// "<seg_id>_<kind>_<level>dB".
std::string noisy_id(const std::string& seg_id, NoiseKind kind, double level_db);

}  // namespace lungdn::noise
