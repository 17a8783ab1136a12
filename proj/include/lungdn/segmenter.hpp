#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lungdn/signal_io.hpp"

namespace lungdn::corpus {

inline constexpr std::size_t kSegmentLength = 8000;
inline constexpr int kSampleRate = 8000;

struct Segment {
  std::vector<double> samples;
  std::string parent_id;
  std::size_t segment_index = 0;

  std::string id() const;
};

std::string segment_id(const std::string& parent_id, std::size_t index);

/// Splits a clip into non-overlapping segments of `length` samples. A
/// residual tail of at least half a segment is repeated to fill one more
/// segment; shorter tails are dropped. Throws RateError unless the clip is
/// at 8 kHz.
std::vector<Segment> segment_clip(const audio::AudioClip& clip, std::size_t length = kSegmentLength);

struct ManifestEntry {
  std::string seg_id;
  std::string parent;
  std::string split;  // "train", "val" or "test"
  std::string dataset;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;

  std::vector<ManifestEntry> split(const std::string& tag) const;
};

struct SplitConfig {
  double train_frac = 0.8;
  double val_frac_of_train = 0.1;
  std::uint64_t seed = 111;
};

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

/// Clip-level split arithmetic: floor(train_frac * n) clips form the train
/// pool, ceil(val_frac * pool) of those validate. Throws CorpusTooSmall
/// unless every split gets at least one clip.
SplitCounts split_counts(std::size_t clips, const SplitConfig& cfg);

/// Assigns each clip id (sorted first, then shuffled with the seed) to a split.
std::vector<std::pair<std::string, std::string>> assign_splits(std::vector<std::string> clip_ids,
                                                                const SplitConfig& cfg);

/// Segments every clip and lists its segments under the clip's split.
CorpusManifest build_manifest(const std::vector<audio::AudioClip>& clips, const SplitConfig& cfg,
                              const std::string& dataset = "fixture", std::size_t length = kSegmentLength);

void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest read_manifest(const std::filesystem::path& path);

}  // namespace lungdn::corpus
