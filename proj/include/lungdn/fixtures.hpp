#pragma once

// Synthetic stand-ins for the restricted recordings, so the full pipeline
// can run end to end.

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "lungdn/signal_io.hpp"

namespace lungdn::fixtures {

/// Band-limited noise bursts (roughly 100-1000 Hz) under a respiratory-cycle
/// envelope, with occasional crackles and wheezes. Peak 0.9.
audio::AudioClip lung_clip(const std::string& id, double seconds, int sample_rate, std::uint64_t seed);

/// Periodic S1/S2 double thumps with energy in 20-150 Hz. Peak 0.9.
audio::AudioClip heart_clip(const std::string& id, double seconds, int sample_rate, std::uint64_t seed);

/// Ward-like background: low-passed rumble, alarm beeps and broadband hiss.
audio::AudioClip hospital_clip(const std::string& id, double seconds, int sample_rate, std::uint64_t seed);

struct FixtureConfig {
  std::size_t lung_clips = 12;
  std::size_t heart_clips = 4;
  std::size_t hospital_clips = 4;
  double min_seconds = 2.0;
  double max_seconds = 6.0;
  std::uint64_t seed = 111;

  nlohmann::json to_json() const;
};

/// Writes <out>/lung, <out>/heart and <out>/hospital WAV directories. Lung
/// clips alternate between 8 kHz and 4 kHz sources.
void write_fixture_set(const std::filesystem::path& out_dir, const FixtureConfig& cfg);

}  // namespace lungdn::fixtures
