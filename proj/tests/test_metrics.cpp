#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "lungdn/errors.hpp"
#include "lungdn/metrics.hpp"
#include "lungdn/report.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lungdn::metrics;
using testutil::random_vector;

TEST_CASE("closed-form metric values") {
  CHECK(snr_db(std::vector<double>{1, 1}, std::vector<double>{1, 0}) == doctest::Approx(3.0103).epsilon(1e-5));
  std::vector<double> y = random_vector(100, 1);
  CHECK(std::isinf(snr_db(y, y)));
  CHECK(rmse(y, y) == 0.0);
  CHECK(prd(std::vector<double>(100, 0.0), y) == 1.0);
  CHECK(prd(y, y) == 0.0);
  std::vector<double> shifted = y;
  for (double& v : shifted) v += 1.0;
  CHECK(rmse(shifted, y) == doctest::Approx(1.0).epsilon(1e-15));
  auto w = st_mae(std::vector<double>(8000, 0.5), std::vector<double>(8000, 0.0));
  CHECK(w.size() == 19);
  for (double v : w) CHECK(v == 0.5);
  CHECK_THROWS_AS(st_mae(std::vector<double>(799), std::vector<double>(799)), lungdn::LengthError);
  CHECK_THROWS_AS(prd(y, std::vector<double>(100, 0.0)), lungdn::DegenerateReference);
  CHECK_THROWS_AS(rmse(y, std::vector<double>(99)), lungdn::ShapeError);
}

TEST_CASE("20 dB construction") {
  // yhat = y + e with sum yhat^2 / sum e^2 = 100.
  auto yhat = random_vector(1000, 2);
  auto e = random_vector(1000, 3);
  double py = 0, pe = 0;
  for (std::size_t i = 0; i < 1000; ++i) py += yhat[i] * yhat[i], pe += e[i] * e[i];
  const double k = std::sqrt(py / (100 * pe));
  std::vector<double> y(1000);
  for (std::size_t i = 0; i < 1000; ++i) y[i] = yhat[i] - k * e[i];
  CHECK(snr_db(yhat, y) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("metrics agree with loop oracles on random pairs") {
  double worst = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    auto y = random_vector(256, 2 * s + 100), yhat = random_vector(256, 2 * s + 101);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    worst = std::max({worst, rel(snr_db(yhat, y), oracle::snr_db(yhat, y)), rel(rmse(yhat, y), oracle::rmse(yhat, y)),
                      rel(prd(yhat, y), oracle::prd(yhat, y))});
    const auto a = st_mae(yhat, y, 64, 32), b = oracle::st_mae(yhat, y, 64, 32);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel(a[i], b[i]));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("metric identities and monotonicity") {
  auto y = random_vector(4000, 7);
  auto yhat = random_vector(4000, 8);
  double sy = 0;
  for (double v : y) sy += v * v;
  CHECK(rmse(yhat, y) == doctest::Approx(prd(yhat, y) * std::sqrt(sy / 4000)).epsilon(1e-12));

  // Adding independent noise of growing power lowers the SNR.
  auto noise = random_vector(4000, 9);
  double last = INFINITY;
  for (double scale : {0.01, 0.05, 0.1, 0.5, 1.0}) {
    std::vector<double> est(4000);
    for (std::size_t i = 0; i < 4000; ++i) est[i] = y[i] + scale * noise[i];
    const double s = snr_db(est, y);
    CHECK(s < last);
    last = s;
  }

  // Near-unit-energy estimates: SNR and PRD are tied together.
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> ref(2000), est(2000);
    for (auto& v : ref) v = g(rng);
    for (std::size_t i = 0; i < ref.size(); ++i) est[i] = ref[i] + 0.1 * g(rng);
    CHECK(std::abs(snr_db(est, ref) + 20 * std::log10(prd(est, ref))) < 0.5);
  }
}

TEST_CASE("aggregation") {
  auto clean = random_vector(800, 11), noisy = random_vector(800, 12);
  auto row = score("n1", "c1", "WGN", -12, noisy, noisy, clean);
  auto single = aggregate({row});
  REQUIRE(single.aggregates.size() == 1);
  const auto& a = single.aggregates[0];
  CHECK(a.pred_snr_db == row.pred_snr_db);
  CHECK(a.prd == row.prd);
  CHECK(a.count == 1);
  // Pass-through denoiser: no improvement.
  CHECK(a.snr_improvement_db == 0.0);

  std::vector<MetricRow> rows;
  for (int i = 0; i < 30; ++i) {
    auto d = random_vector(800, 100 + i);
    rows.push_back(score("n" + std::to_string(i), "c", i % 2 ? "WGN" : "Pink", i % 3 * 5.0, d, noisy, clean));
  }
  rows.push_back(score("perfect", "c", "WGN", 0.0, clean, noisy, clean));
  auto rep = aggregate(rows);
  auto shuffled = rows;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(1));
  auto rep2 = aggregate(shuffled);
  REQUIRE(rep.aggregates.size() == rep2.aggregates.size());
  for (std::size_t i = 0; i < rep.aggregates.size(); ++i) {
    CHECK(rep.aggregates[i].kind == rep2.aggregates[i].kind);
    CHECK(rep.aggregates[i].pred_snr_db == doctest::Approx(rep2.aggregates[i].pred_snr_db).epsilon(1e-12));
  }
  const auto* wgn0 = rep.find("WGN", 0.0);
  REQUIRE(wgn0);
  CHECK(wgn0->excluded == 1);
  CHECK(std::isfinite(wgn0->pred_snr_db));
  double mean = 0;
  std::size_t n = 0;
  for (const auto& r : rows)
    if (r.kind == "WGN" && r.level_db == 0.0 && std::isfinite(r.pred_snr_db)) mean += r.pred_snr_db, ++n;
  CHECK(wgn0->pred_snr_db == doctest::Approx(mean / double(n)).epsilon(1e-12));

  auto dir = testutil::temp_dir("metrics");
  rep.write_csv(dir / "metrics.csv");
  std::ifstream in(dir / "metrics.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("seg_id,kind,level_db,pred_snr_db,prd,rmse", 0) == 0);
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == rows.size());
}

TEST_CASE("ablation table and SVG report") {
  auto clean = random_vector(800, 1), noisy = random_vector(800, 2);
  std::vector<MetricReport> reps;
  for (int v = 0; v < 2; ++v) {
    std::vector<MetricRow> rows;
    for (double level : {-12.0, 0.0, 12.0}) rows.push_back(score("n", "c", "WGN", level, random_vector(800, 3 + v), noisy, clean));
    reps.push_back(aggregate(rows));
  }
  auto table = lungdn::report::combine({"noformer", "uformer"}, reps);
  auto dir = testutil::temp_dir("report");
  lungdn::report::write_ablation_csv(table, dir / "ablation.csv");
  auto back = lungdn::report::read_ablation_csv(dir / "ablation.csv");
  CHECK(back.variants == table.variants);
  REQUIRE(back.rows.size() == 3);
  CHECK(back.rows[1].per_variant[1].snr_improvement_db == table.rows[1].per_variant[1].snr_improvement_db);
  auto svgs = lungdn::report::write_report(back, dir / "out");
  REQUIRE(svgs.size() == 1);
  std::ifstream svg(svgs[0]);
  std::string text((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
  std::size_t polylines = 0;
  for (auto pos = text.find("<polyline"); pos != std::string::npos; pos = text.find("<polyline", pos + 1)) ++polylines;
  CHECK(polylines == 2);
  CHECK(text.find("uformer") != std::string::npos);
}
