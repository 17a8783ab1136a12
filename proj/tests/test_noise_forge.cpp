#include <cmath>
#include <numbers>

#include "doctest.h"
#include "lungdn/errors.hpp"
#include "lungdn/noise_forge.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lungdn::noise;
using lungdn::audio::AudioClip;
using lungdn::corpus::Segment;

namespace {
Segment clean_segment(std::uint64_t seed) {
  Segment s{testutil::random_vector(8000, seed), "clip" + std::to_string(seed), 0};
  for (std::size_t i = 0; i < 8000; ++i) s.samples[i] *= std::sin(2 * std::numbers::pi * 3 * i / 8000.0);
  return s;
}
}  // namespace

TEST_CASE("wgn statistics and determinism") {
  auto a = wgn(8000, 0.25, 7);
  double mean = 0;
  for (double v : a) mean += v;
  mean /= 8000;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(mean_square(a) - 0.25) < 0.05 * 0.25);
  CHECK(wgn(8000, 0.25, 7) == a);
  CHECK(wgn(8000, 0.25, 8) != a);
  auto tiny = wgn(100, 1e-12, 1);
  for (double v : tiny) CHECK(std::abs(v) < 1e-5);
  CHECK_THROWS_AS(wgn(10, 0.0, 1), lungdn::RangeError);
}

TEST_CASE("pink noise is zero-mean, unit power, deterministic") {
  auto p = pink(8000, 3);
  double mean = 0;
  for (double v : p) mean += v;
  CHECK(std::abs(mean / 8000) < 1e-12);
  CHECK(std::abs(mean_square(p) - 1.0) < 1e-12);
  CHECK(pink(8000, 3) == p);
  CHECK(pink(257, 3).size() == 257);
  CHECK_THROWS_AS(pink(255, 1), lungdn::LengthError);
}

TEST_CASE("pink noise PSD slope over 20-2000 Hz") {
  double slope = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    auto psd = oracle::welch_psd(pink(8000, 1000 + s), 1024);
    slope += oracle::loglog_slope(psd, 8000, 1024, 20, 2000);
  }
  slope /= seeds;
  CHECK(slope > -1.15);
  CHECK(slope < -0.85);
  // White noise through the same oracle is flat.
  auto flat = oracle::loglog_slope(oracle::welch_psd(wgn(8000, 1, 5), 1024), 8000, 1024, 20, 2000);
  CHECK(std::abs(flat) < 0.15);
}

TEST_CASE("scale_noise_to_snr closed forms") {
  std::vector<double> sig(100, 0.2), noise(100, 0.1);
  // P_signal = 0.04, P_noise = 0.01, 10 dB -> SF = 0.4
  auto scaled = scale_noise_to_snr(sig, noise, 10.0);
  for (double v : scaled) CHECK(v == doctest::Approx(0.1 * std::sqrt(0.4)).epsilon(1e-14));
  std::vector<double> same(100, 0.2);
  auto unchanged = scale_noise_to_snr(sig, same, 0.0);
  for (double v : unchanged) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  auto n = testutil::random_vector(8000, 9);
  auto s = testutil::random_vector(8000, 10);
  CHECK(std::abs(snr_db(s, scale_noise_to_snr(s, n, -12.0)) + 12.0) < 1e-6);
  CHECK_THROWS_AS(scale_noise_to_snr(sig, std::vector<double>(100, 0.0), 0.0), lungdn::DegenerateNoise);
}

TEST_CASE("heart and hospital pools") {
  NoisePools pools;
  CHECK_THROWS_AS(get_noise(NoiseKind::heart, pools, 1), lungdn::PoolError);
  pools = NoisePools::from_clips({AudioClip{testutil::random_vector(4000, 1), 4000, "h1"}}, {});
  REQUIRE(pools.heart[0].sample_rate == 8000);
  auto d = get_noise(NoiseKind::heart, pools, 3);
  CHECK(d.samples == pools.heart[0].samples);
  CHECK(d.source_ids == std::vector<std::string>{"h1"});
  CHECK_THROWS_AS(get_noise(NoiseKind::heart_plus_hospital, pools, 3), lungdn::PoolError);

  NoisePools ones;
  ones.heart = {AudioClip{std::vector<double>(8000, 1.0), 8000, "h"}};
  ones.hospital = {AudioClip{std::vector<double>(8000, 1.0), 8000, "s"}};
  for (double v : get_noise(NoiseKind::heart_plus_hospital, ones, 4).samples) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));

  // Recover the mixing weights by least squares.
  NoisePools known;
  auto h = testutil::random_vector(8000, 11), s = testutil::random_vector(8000, 12);
  known.heart = {AudioClip{h, 8000, "h"}};
  known.hospital = {AudioClip{s, 8000, "s"}};
  auto m = get_noise(NoiseKind::heart_plus_hospital, known, 5).samples;
  double hh = 0, ss = 0, hs = 0, hm = 0, sm = 0;
  for (std::size_t i = 0; i < 8000; ++i) {
    hh += h[i] * h[i];
    ss += s[i] * s[i];
    hs += h[i] * s[i];
    hm += h[i] * m[i];
    sm += s[i] * m[i];
  }
  const double det = hh * ss - hs * hs;
  CHECK(std::abs((hm * ss - sm * hs) / det - 0.7) < 1e-9);
  CHECK(std::abs((sm * hh - hm * hs) / det - 0.3) < 1e-9);
}

TEST_CASE("long noise clips are cropped at a seeded offset, short ones looped") {
  NoisePools pools;
  std::vector<double> longclip(20000);
  for (std::size_t i = 0; i < longclip.size(); ++i) longclip[i] = double(i);
  pools.heart = {AudioClip{longclip, 8000, "long"}};
  auto a = get_noise(NoiseKind::heart, pools, 1).samples;
  CHECK(a.size() == 8000);
  CHECK(a[1] - a[0] == 1.0);
  CHECK(get_noise(NoiseKind::heart, pools, 1).samples == a);
  pools.heart = {AudioClip{{1.0, 2.0, 3.0}, 8000, "short"}};
  auto b = get_noise(NoiseKind::heart, pools, 1).samples;
  CHECK(b[3] == 1.0);
  CHECK(b[7999] == b[7999 % 3]);
}

TEST_CASE("mix realizes the target SNR") {
  NoisePools pools;
  pools.heart = {AudioClip{testutil::random_vector(12000, 20), 8000, "h"}};
  pools.hospital = {AudioClip{testutil::random_vector(9000, 21), 8000, "s"}};
  for (NoiseKind k : {NoiseKind::pink, NoiseKind::heart, NoiseKind::heart_plus_hospital}) {
    auto clean = clean_segment(30);
    auto r = mix(clean, {k, -12.0, 77}, pools);
    CHECK(std::abs(r.record.realized_snr_db + 12.0) < 1e-6);
    for (std::size_t i = 0; i < 8000; ++i) CHECK(std::abs((r.noisy[i] - clean.samples[i]) - r.scaled_noise[i]) < 1e-12);
  }
  auto r = mix(clean_segment(31), {NoiseKind::wgn, 0.0, 5});
  CHECK(std::abs(r.record.realized_snr_db) < 0.5);
  CHECK(r.record.noisy_id == "clip31_s0000_WGN_0dB");
  Segment silent{std::vector<double>(8000, 0.0), "z", 0};
  CHECK_THROWS_AS(mix(silent, {NoiseKind::pink, 0.0, 1}), lungdn::EmptyAudio);
}

TEST_CASE("WGN realized SNR error averages out") {
  double mean_err = 0;
  for (int i = 0; i < 100; ++i) {
    auto clean = clean_segment(100 + i);
    const double level = training_levels()[i % 6];
    auto r = mix(clean, {NoiseKind::wgn, level, stream_seed(111, clean.id(), NoiseKind::wgn, level)});
    const double err = r.record.realized_snr_db - level;
    CHECK(std::abs(err) < 0.5);
    mean_err += err;
  }
  CHECK(std::abs(mean_err / 100) < 0.1);
}

TEST_CASE("stream seeds and records") {
  CHECK(stream_seed(1, "a", NoiseKind::wgn, 5) == stream_seed(1, "a", NoiseKind::wgn, 5));
  CHECK(stream_seed(1, "a", NoiseKind::wgn, 5) != stream_seed(1, "a", NoiseKind::wgn, -5));
  CHECK(stream_seed(1, "a", NoiseKind::wgn, 5) != stream_seed(1, "b", NoiseKind::wgn, 5));
  CHECK(stream_seed(1, "a", NoiseKind::wgn, 5) != stream_seed(1, "a", NoiseKind::pink, 5));
  CHECK(stream_seed(1, "a", NoiseKind::wgn, 5) != stream_seed(2, "a", NoiseKind::wgn, 5));
  MixRecord rec{"n", "c", "train", NoiseKind::heart_plus_hospital, -8, 42, {"h", "s"}, -8.0000001};
  auto back = MixRecord::from_json(nlohmann::json::parse(rec.to_json().dump()));
  CHECK(back.noisy_id == rec.noisy_id);
  CHECK(back.kind == rec.kind);
  CHECK(back.realized_snr_db == rec.realized_snr_db);
  CHECK(back.noise_source_ids == rec.noise_source_ids);
  CHECK(parse_kind("heart+hospital") == NoiseKind::heart_plus_hospital);
  CHECK_THROWS_AS(parse_kind("brown"), lungdn::ConfigError);
  CHECK(testing_levels().size() == 12);
}
