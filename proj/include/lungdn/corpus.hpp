#pragma once

// On-disk corpus layout shared by the CLI commands:
//
//   <corpus>/manifest.jsonl      clean segments and their splits
//   <corpus>/clean/<seg>.f64     clean segments (raw little-endian doubles)
//   <corpus>/mixes.jsonl         one MixRecord per noisy segment
//   <corpus>/noisy/<id>.f64      noisy segments

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lungdn/noise_forge.hpp"
#include "lungdn/segmenter.hpp"
#include "lungdn/trainer.hpp"

namespace lungdn::corpus {

void write_f64(const std::filesystem::path& path, std::span<const double> samples);
/// Throws IoError, or ShapeError if `expected` is non-zero and the length differs.
std::vector<double> read_f64(const std::filesystem::path& path, std::size_t expected = 0);

/// Sorted list of *.wav files (case-insensitive) directly inside `dir`.
std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir);

enum class Normalize { per_clip, per_segment };
std::string normalize_name(Normalize n);
Normalize parse_normalize(const std::string& s);

struct PrepareConfig {
  SplitConfig split;
  std::string dataset = "fixture";
  Normalize normalize = Normalize::per_clip;
  double low_hz = 50.0;
  double high_hz = 2500.0;
  int filter_order = 6;

  nlohmann::json to_json() const;
};

/// Bandpass at the source rate, resample to 8 kHz, peak-normalize.
audio::AudioClip preprocess(const audio::AudioClip& clip, const PrepareConfig& cfg);

struct PrepareReport {
  std::size_t files = 0;
  std::size_t clips = 0;
  std::size_t segments = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // (file, error)
  nlohmann::json to_json() const;
};

/// Reads every WAV in `in_dir`, preprocesses, segments and splits by clip.
/// Per-file failures are collected; throws CorpusTooSmall when fewer than
/// three clips survive (including an empty directory).
PrepareReport prepare_corpus(const std::filesystem::path& in_dir, const std::filesystem::path& corpus_dir,
                             const PrepareConfig& cfg);

std::vector<Segment> load_clean_segments(const std::filesystem::path& corpus_dir, const CorpusManifest& manifest);

struct MixConfig {
  std::vector<noise::NoiseKind> kinds{noise::NoiseKind::wgn};
  /// When non-empty, used for every split; otherwise train/val draw from
  /// training_levels() and test from testing_levels().
  std::vector<double> levels;
  std::uint64_t seed = 111;
  std::size_t threads = 1;

  nlohmann::json to_json() const;
};

void write_mix_records(const std::vector<noise::MixRecord>& records, const std::filesystem::path& path);
std::vector<noise::MixRecord> read_mix_records(const std::filesystem::path& path);

/// Mixes every clean segment at every (kind, level) of its split and writes
/// noisy/ and mixes.jsonl into the corpus directory. Returns the records in
/// manifest order.
std::vector<noise::MixRecord> build_noisy_corpus(const std::filesystem::path& corpus_dir,
                                                 const noise::NoisePools& pools, const MixConfig& cfg);

struct AuditResult {
  std::size_t checked = 0;
  double max_record_error_db = 0.0;  // |recomputed - stored realized SNR|
  double max_target_error_db = 0.0;  // |recomputed - target| over exact kinds
};
/// Recomputes the realized SNR of every stored mix from the files on disk.
AuditResult audit_mixes(const std::filesystem::path& corpus_dir);

/// Loads (noisy, clean) pairs for the train and val splits, optionally
/// restricted to some noise kinds (empty = all).
train::TrainData load_pairs(const std::filesystem::path& corpus_dir, const std::vector<noise::NoiseKind>& kinds = {});

}  // namespace lungdn::corpus
