#include "lungdn/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>

#include "json.hpp"
#include "lungdn/errors.hpp"

namespace lungdn::corpus {

std::string segment_id(const std::string& parent_id, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_s%04zu", index);
  return parent_id + buf;
}

std::string Segment::id() const { return segment_id(parent_id, segment_index); }

std::vector<Segment> segment_clip(const audio::AudioClip& clip, std::size_t length) {
  if (clip.sample_rate != kSampleRate)
    throw RateError("segmentation needs " + std::to_string(kSampleRate) + " Hz audio, clip '" + clip.source_id +
                    "' is at " + std::to_string(clip.sample_rate) + " Hz");
  if (length == 0) throw RangeError("segment length must be positive");
  const auto& x = clip.samples;
  const std::size_t full = x.size() / length;
  std::vector<Segment> out;
  for (std::size_t k = 0; k < full; ++k)
    out.push_back({std::vector<double>(x.begin() + k * length, x.begin() + (k + 1) * length), clip.source_id, k});
  const std::size_t residual = x.size() - full * length;
  if (residual > 0 && 2 * residual >= length) {
    std::vector<double> tail(x.begin() + full * length, x.end());
    std::vector<double> seg;
    seg.reserve(length);
    while (seg.size() < length) seg.insert(seg.end(), tail.begin(), tail.begin() + std::min(tail.size(), length - seg.size()));
    out.push_back({std::move(seg), clip.source_id, full});
  }
  return out;
}

std::vector<ManifestEntry> CorpusManifest::split(const std::string& tag) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out), [&](const auto& e) { return e.split == tag; });
  return out;
}

SplitCounts split_counts(std::size_t clips, const SplitConfig& cfg) {
  if (clips < 3) throw CorpusTooSmall("need at least 3 clips for train/val/test splits, got " + std::to_string(clips));
  SplitCounts c;
  std::size_t pool = static_cast<std::size_t>(std::floor(cfg.train_frac * double(clips) + 1e-9));
  pool = std::clamp<std::size_t>(pool, 2, clips - 1);
  c.val = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.val_frac_of_train * double(pool) - 1e-9)));
  if (c.val >= pool) throw CorpusTooSmall("validation fraction leaves no training clips");
  c.train = pool - c.val;
  c.test = clips - pool;
  return c;
}

std::vector<std::pair<std::string, std::string>> assign_splits(std::vector<std::string> clip_ids,
                                                                const SplitConfig& cfg) {
  const SplitCounts counts = split_counts(clip_ids.size(), cfg);
  std::sort(clip_ids.begin(), clip_ids.end());
  if (std::adjacent_find(clip_ids.begin(), clip_ids.end()) != clip_ids.end())
    throw ManifestError("duplicate clip id in corpus");
  // Fisher-Yates with raw engine output keeps the order identical across
  // standard library implementations.
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t i = clip_ids.size(); i > 1; --i) std::swap(clip_ids[i - 1], clip_ids[rng() % i]);
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < clip_ids.size(); ++i) {
    const char* tag = i < counts.train ? "train" : i < counts.train + counts.val ? "val" : "test";
    out.emplace_back(clip_ids[i], tag);
  }
  return out;
}

CorpusManifest build_manifest(const std::vector<audio::AudioClip>& clips, const SplitConfig& cfg,
                              const std::string& dataset, std::size_t length) {
  std::vector<std::string> ids;
  std::map<std::string, const audio::AudioClip*> by_id;
  for (const auto& c : clips) {
    ids.push_back(c.source_id);
    by_id[c.source_id] = &c;
  }
  std::map<std::string, std::string> split_of;
  for (auto& [id, tag] : assign_splits(ids, cfg)) split_of[id] = tag;
  CorpusManifest m;
  m.seed = cfg.seed;
  for (const auto& [id, clip] : by_id)
    for (const auto& seg : segment_clip(*clip, length)) m.entries.push_back({seg.id(), id, split_of[id], dataset});
  return m;
}

void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : manifest.entries) {
    const nlohmann::ordered_json j = {{"seg_id", e.seg_id}, {"parent", e.parent}, {"split", e.split}, {"dataset", e.dataset}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  CorpusManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      m.entries.push_back({j.at("seg_id").get<std::string>(), j.at("parent").get<std::string>(),
                           j.at("split").get<std::string>(), j.value("dataset", std::string("unknown"))});
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

}  // namespace lungdn::corpus
