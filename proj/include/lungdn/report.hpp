#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lungdn/metrics.hpp"

namespace lungdn::report {

/// Side-by-side per-(kind, level) aggregates for several model variants.
struct AblationTable {
  struct Row {
    std::string kind;
    double level_db = 0.0;
    double input_snr_db = 0.0;
    std::vector<metrics::Aggregate> per_variant;  // same order as `variants`
  };
  std::vector<std::string> variants;
  std::vector<Row> rows;
};

/// Joins reports on (kind, level). Every report must cover the same groups.
AblationTable combine(const std::vector<std::string>& variants, const std::vector<metrics::MetricReport>& reports);

/// Columns: kind, level_db, input_snr_db, then <variant>_pred_snr_db,
/// <variant>_prd, <variant>_rmse, <variant>_snr_improvement_db per variant.
void write_ablation_csv(const AblationTable& table, const std::filesystem::path& path);
AblationTable read_ablation_csv(const std::filesystem::path& path);

struct Curve {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y), drawn in order
};

/// Self-contained SVG line chart, one polyline per curve.
std::string render_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Curve>& curves);

/// Writes report.csv (kind, level_db, variant, snr_improvement_db, pred_snr_db)
/// and one snr_improvement_<kind>.svg per noise kind. Returns the SVG paths.
std::vector<std::filesystem::path> write_report(const AblationTable& table, const std::filesystem::path& out_dir);

}  // namespace lungdn::report
