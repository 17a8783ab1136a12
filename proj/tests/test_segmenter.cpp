#include <map>
#include <set>

#include "doctest.h"
#include "lungdn/errors.hpp"
#include "lungdn/segmenter.hpp"
#include "test_util.hpp"

using namespace lungdn::corpus;
using lungdn::audio::AudioClip;

namespace {
AudioClip ramp(std::size_t n, const std::string& id = "c") {
  AudioClip c{std::vector<double>(n), 8000, id};
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = double(i) / double(n);
  return c;
}
}  // namespace

TEST_CASE("exact one-second clip gives one identical segment") {
  auto c = ramp(8000);
  auto segs = segment_clip(c);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].samples == c.samples);
  CHECK(segs[0].id() == "c_s0000");
}

TEST_CASE("residual tail of at least half a segment is repeated") {
  auto c = ramp(20000);
  auto segs = segment_clip(c);
  REQUIRE(segs.size() == 3);
  for (std::size_t k = 0; k < 2; ++k)
    CHECK(segs[k].samples == std::vector<double>(c.samples.begin() + 8000 * k, c.samples.begin() + 8000 * (k + 1)));
  std::vector<double> tail(c.samples.begin() + 16000, c.samples.end());
  std::vector<double> expected = tail;
  expected.insert(expected.end(), tail.begin(), tail.end());
  CHECK(segs[2].samples == expected);
  CHECK(segs[2].segment_index == 2);
}

TEST_CASE("short clips and tails") {
  CHECK(segment_clip(ramp(3600)).empty());
  CHECK(segment_clip(ramp(3999)).empty());
  auto half = segment_clip(ramp(4000));
  REQUIRE(half.size() == 1);
  CHECK(half[0].samples.size() == 8000);
  CHECK(half[0].samples[4000] == half[0].samples[0]);
  // Tail of 0.6 s: repeated then truncated.
  auto odd = segment_clip(ramp(8000 + 4800));
  REQUIRE(odd.size() == 2);
  CHECK(odd[1].samples[4800] == odd[1].samples[0]);
  CHECK(segment_clip(ramp(8000 + 3000)).size() == 1);
  AudioClip wrong{std::vector<double>(8000), 4000, "w"};
  CHECK_THROWS_AS(segment_clip(wrong), lungdn::RateError);
}

TEST_CASE("segment count property") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 50000;
    auto segs = segment_clip(ramp(n));
    const std::size_t full = n / 8000, rest = n % 8000;
    CHECK(segs.size() == full + (rest > 0 && 2 * rest >= 8000 ? 1 : 0));
    for (const auto& s : segs) CHECK(s.samples.size() == 8000);
  }
}

TEST_CASE("split arithmetic") {
  auto c = split_counts(10, {});
  CHECK(c.train == 7);
  CHECK(c.val == 1);
  CHECK(c.test == 2);
  auto c3 = split_counts(3, {});
  CHECK(c3.train == 1);
  CHECK(c3.val == 1);
  CHECK(c3.test == 1);
  CHECK_THROWS_AS(split_counts(2, {}), lungdn::CorpusTooSmall);
}

TEST_CASE("manifest is deterministic and partitions segments by clip") {
  std::vector<AudioClip> clips;
  for (int i = 0; i < 10; ++i) clips.push_back(ramp(8000 * (1 + i % 3), "clip" + std::to_string(i)));
  SplitConfig cfg;
  auto m1 = build_manifest(clips, cfg);
  std::reverse(clips.begin(), clips.end());
  auto m2 = build_manifest(clips, cfg);
  CHECK(m1.entries == m2.entries);
  std::map<std::string, std::set<std::string>> splits_of_parent;
  std::set<std::string> ids;
  for (const auto& e : m1.entries) {
    splits_of_parent[e.parent].insert(e.split);
    CHECK(ids.insert(e.seg_id).second);
  }
  for (const auto& [p, s] : splits_of_parent) CHECK(s.size() == 1);
  std::map<std::string, int> clip_count;
  for (const auto& [p, s] : splits_of_parent) clip_count[*s.begin()]++;
  CHECK(clip_count["train"] == 7);
  CHECK(clip_count["val"] == 1);
  CHECK(clip_count["test"] == 2);
  cfg.seed = 112;
  auto m3 = build_manifest(clips, cfg);
  CHECK(m3.entries.size() == m1.entries.size());

  auto dir = testutil::temp_dir("manifest");
  write_manifest(m1, dir / "m.jsonl");
  auto back = read_manifest(dir / "m.jsonl");
  CHECK(back.entries == m1.entries);
  CHECK_THROWS_AS(build_manifest({ramp(8000, "a"), ramp(8000, "b")}, cfg), lungdn::CorpusTooSmall);
}
