#include "lungdn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "lungdn/errors.hpp"

namespace lungdn::metrics {

namespace {
void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("metric inputs differ in length: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.empty()) throw ShapeError("metric inputs are empty");
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

double snr_db(std::span<const double> yhat, std::span<const double> y) {
  require_same_length(yhat, y);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += yhat[i] * yhat[i];
    den += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  }
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(num / den);
}

double rmse(std::span<const double> yhat, std::span<const double> y) {
  require_same_length(yhat, y);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / double(y.size()));
}

double prd(std::span<const double> yhat, std::span<const double> y) {
  require_same_length(yhat, y);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    den += y[i] * y[i];
  }
  if (den == 0.0) throw DegenerateReference("reference signal is silent");
  return std::sqrt(num / den);
}

std::vector<double> st_mae(std::span<const double> yhat, std::span<const double> y, std::size_t window,
                           std::size_t step) {
  require_same_length(yhat, y);
  if (window == 0 || step == 0) throw RangeError("window and step must be positive");
  if (y.size() < window)
    throw LengthError("signal of " + std::to_string(y.size()) + " samples is shorter than the " +
                      std::to_string(window) + "-sample window");
  const std::size_t count = (y.size() - window) / step + 1;
  std::vector<double> out(count);
  for (std::size_t w = 0; w < count; ++w) {
    double s = 0.0;
    for (std::size_t i = w * step; i < w * step + window; ++i) s += std::abs(y[i] - yhat[i]);
    out[w] = s / double(window);
  }
  return out;
}

MetricRow score(const std::string& seg_id, const std::string& clean_seg_id, const std::string& kind, double level_db,
                std::span<const double> denoised, std::span<const double> noisy, std::span<const double> clean) {
  MetricRow r;
  r.seg_id = seg_id;
  r.clean_seg_id = clean_seg_id;
  r.kind = kind;
  r.level_db = level_db;
  r.pred_snr_db = snr_db(denoised, clean);
  r.input_snr_db = snr_db(noisy, clean);
  r.prd = prd(denoised, clean);
  r.rmse = rmse(denoised, clean);
  return r;
}

MetricReport aggregate(std::vector<MetricRow> rows) {
  MetricReport rep;
  std::map<std::pair<std::string, double>, Aggregate> groups;
  for (const auto& r : rows) {
    auto& g = groups[{r.kind, r.level_db}];
    g.kind = r.kind;
    g.level_db = r.level_db;
    ++g.count;
    if (std::isinf(r.pred_snr_db) || std::isinf(r.input_snr_db)) {
      ++g.excluded;
      continue;
    }
    g.pred_snr_db += r.pred_snr_db;
    g.input_snr_db += r.input_snr_db;
    g.prd += r.prd;
    g.rmse += r.rmse;
  }
  for (auto& [key, g] : groups) {
    const double n = double(g.count - g.excluded);
    if (n > 0) {
      g.pred_snr_db /= n;
      g.input_snr_db /= n;
      g.prd /= n;
      g.rmse /= n;
    }
    g.snr_improvement_db = g.pred_snr_db - g.input_snr_db;
    rep.aggregates.push_back(g);
  }
  rep.rows = std::move(rows);
  return rep;
}

const Aggregate* MetricReport::find(const std::string& kind, double level_db) const {
  for (const auto& a : aggregates)
    if (a.kind == kind && a.level_db == level_db) return &a;
  return nullptr;
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "seg_id,kind,level_db,pred_snr_db,prd,rmse,input_snr_db,snr_improvement_db\n";
  for (const auto& r : rows)
    out << r.seg_id << ',' << r.kind << ',' << fmt(r.level_db) << ',' << fmt(r.pred_snr_db) << ',' << fmt(r.prd) << ','
        << fmt(r.rmse) << ',' << fmt(r.input_snr_db) << ',' << fmt(r.pred_snr_db - r.input_snr_db) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

nlohmann::ordered_json MetricReport::to_json() const {
  nlohmann::ordered_json groups = nlohmann::ordered_json::array();
  for (const auto& a : aggregates)
    groups.push_back({{"kind", a.kind},
                      {"level_db", a.level_db},
                      {"count", a.count},
                      {"excluded_perfect", a.excluded},
                      {"pred_snr_db", a.pred_snr_db},
                      {"prd", a.prd},
                      {"rmse", a.rmse},
                      {"input_snr_db", a.input_snr_db},
                      {"snr_improvement_db", a.snr_improvement_db}});
  return {{"snr_convention", "10*log10(sum(denoised^2) / sum((clean - denoised)^2))"},
          {"rows", rows.size()},
          {"aggregates", groups}};
}

}  // namespace lungdn::metrics
