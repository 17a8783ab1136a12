#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace lungdn::metrics {

/// 10 log10(sum yhat^2 / sum (y - yhat)^2). Returns +infinity when yhat == y.
/// Note the numerator is the denoised signal's power, not the reference's.
double snr_db(std::span<const double> yhat, std::span<const double> y);
/// sqrt(mean((y - yhat)^2)).
double rmse(std::span<const double> yhat, std::span<const double> y);
/// sqrt(sum (y - yhat)^2 / sum y^2). Throws DegenerateReference if y is silent.
double prd(std::span<const double> yhat, std::span<const double> y);
/// Mean |y - yhat| over windows [t, t + window), t = 0, step, 2 step, ...
/// Throws LengthError if the signal is shorter than one window.
std::vector<double> st_mae(std::span<const double> yhat, std::span<const double> y, std::size_t window = 800,
                           std::size_t step = 400);

struct MetricRow {
  std::string seg_id;        // noisy segment id
  std::string clean_seg_id;
  std::string kind;
  double level_db = 0.0;
  double pred_snr_db = 0.0;  // snr_db(denoised, clean)
  double input_snr_db = 0.0; // snr_db(noisy, clean)
  double prd = 0.0;
  double rmse = 0.0;
};

/// Scores one denoised segment against its clean reference.
MetricRow score(const std::string& seg_id, const std::string& clean_seg_id, const std::string& kind, double level_db,
                std::span<const double> denoised, std::span<const double> noisy, std::span<const double> clean);

struct Aggregate {
  std::string kind;
  double level_db = 0.0;
  std::size_t count = 0;
  std::size_t excluded = 0;  // rows with +infinity SNR, left out of the means
  double pred_snr_db = 0.0;
  double input_snr_db = 0.0;
  double snr_improvement_db = 0.0;
  double prd = 0.0;
  double rmse = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::vector<Aggregate> aggregates;  // sorted by (kind, level)

  const Aggregate* find(const std::string& kind, double level_db) const;
  void write_csv(const std::filesystem::path& path) const;
  nlohmann::ordered_json to_json() const;
};

/// Per-(kind, level) means in a deterministic order.
MetricReport aggregate(std::vector<MetricRow> rows);

}  // namespace lungdn::metrics
