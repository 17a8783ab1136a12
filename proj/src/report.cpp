#include "lungdn/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "lungdn/errors.hpp"

namespace lungdn::report {

namespace {
std::string num(double v, const char* fmt = "%.17g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": not a number: '" + s + "'");
  }
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
}  // namespace

AblationTable combine(const std::vector<std::string>& variants, const std::vector<metrics::MetricReport>& reports) {
  if (variants.size() != reports.size() || variants.empty())
    throw ConfigError("need one metric report per variant");
  AblationTable t;
  t.variants = variants;
  for (const auto& a : reports[0].aggregates) {
    AblationTable::Row row{a.kind, a.level_db, a.input_snr_db, {}};
    for (std::size_t v = 0; v < reports.size(); ++v) {
      const auto* match = reports[v].find(a.kind, a.level_db);
      if (!match)
        throw ManifestError("variant " + variants[v] + " has no results for " + a.kind + " at " + num(a.level_db, "%g") +
                            " dB");
      row.per_variant.push_back(*match);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_ablation_csv(const AblationTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "kind,level_db,input_snr_db";
  for (const auto& v : table.variants)
    out << ',' << v << "_pred_snr_db," << v << "_prd," << v << "_rmse," << v << "_snr_improvement_db";
  out << '\n';
  for (const auto& r : table.rows) {
    out << r.kind << ',' << num(r.level_db) << ',' << num(r.input_snr_db);
    for (const auto& a : r.per_variant)
      out << ',' << num(a.pred_snr_db) << ',' << num(a.prd) << ',' << num(a.rmse) << ',' << num(a.snr_improvement_db);
    out << '\n';
  }
}

AblationTable read_ablation_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  const auto header = split_csv(line);
  if (header.size() < 7 || header[0] != "kind" || header[1] != "level_db" || header[2] != "input_snr_db" ||
      (header.size() - 3) % 4 != 0)
    throw ParseError(path.string() + ": not an ablation table");
  AblationTable t;
  const std::string suffix = "_pred_snr_db";
  for (std::size_t c = 3; c < header.size(); c += 4) {
    const auto& h = header[c];
    if (h.size() <= suffix.size() || h.compare(h.size() - suffix.size(), suffix.size(), suffix) != 0)
      throw ParseError(path.string() + ": unexpected column " + h);
    t.variants.push_back(h.substr(0, h.size() - suffix.size()));
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != header.size()) throw ParseError(where + ": wrong column count");
    AblationTable::Row row{cells[0], parse_double(cells[1], where), parse_double(cells[2], where), {}};
    for (std::size_t v = 0; v < t.variants.size(); ++v) {
      metrics::Aggregate a;
      a.kind = row.kind;
      a.level_db = row.level_db;
      a.input_snr_db = row.input_snr_db;
      a.pred_snr_db = parse_double(cells[3 + 4 * v], where);
      a.prd = parse_double(cells[4 + 4 * v], where);
      a.rmse = parse_double(cells[5 + 4 * v], where);
      a.snr_improvement_db = parse_double(cells[6 + 4 * v], where);
      row.per_variant.push_back(a);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string render_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Curve>& curves) {
  const double width = 640, height = 420, left = 70, right = 150, top = 40, bottom = 60;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& c : curves)
    for (auto [x, y] : c.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 1, x1 += 1;
  if (y1 == y0) y0 -= 1, y1 += 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
    << "</text>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5, yv = y0 + (y1 - y0) * i / 5;
    s << "<line x1=\"" << num(sx(xv), "%.2f") << "\" y1=\"" << top + ph << "\" x2=\"" << num(sx(xv), "%.2f")
      << "\" y2=\"" << top + ph + 5 << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << num(sx(xv), "%.2f") << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
      << num(xv, "%.3g") << "</text>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << num(sy(yv), "%.2f") << "\" x2=\"" << left + pw << "\" y2=\""
      << num(sy(yv), "%.2f") << "\" stroke=\"#dddddd\"/>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << num(sy(yv) + 4, "%.2f") << "\" text-anchor=\"end\">"
      << num(yv, "%.3g") << "</text>\n";
  }
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 15 << "\" text-anchor=\"middle\">" << escape(x_label)
    << "</text>\n";
  s << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(y_label) << "</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* colour = kPalette[i % std::size(kPalette)];
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (auto [x, y] : curves[i].points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      s << (first ? "" : " ") << num(sx(x), "%.2f") << ',' << num(sy(y), "%.2f");
      first = false;
    }
    s << "\"><title>" << escape(curves[i].label) << "</title></polyline>\n";
    const double ly = top + 10 + 20.0 * double(i);
    s << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 36 << "\" y2=\"" << ly
      << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << left + pw + 42 << "\" y=\"" << ly + 4 << "\">" << escape(curves[i].label) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<std::filesystem::path> write_report(const AblationTable& table, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "report.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write " + (out_dir / "report.csv").string());
  csv << "kind,level_db,variant,snr_improvement_db,pred_snr_db\n";
  std::map<std::string, std::vector<const AblationTable::Row*>> by_kind;
  for (const auto& r : table.rows) by_kind[r.kind].push_back(&r);
  std::vector<std::filesystem::path> svgs;
  for (auto& [kind, rows] : by_kind) {
    std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->level_db < b->level_db; });
    std::vector<Curve> curves;
    for (std::size_t v = 0; v < table.variants.size(); ++v) {
      Curve c{table.variants[v], {}};
      for (const auto* r : rows) {
        const auto& a = r->per_variant[v];
        c.points.emplace_back(r->level_db, a.snr_improvement_db);
        csv << kind << ',' << num(r->level_db) << ',' << table.variants[v] << ',' << num(a.snr_improvement_db) << ','
            << num(a.pred_snr_db) << '\n';
      }
      curves.push_back(std::move(c));
    }
    const auto path = out_dir / ("snr_improvement_" + kind + ".svg");
    std::ofstream(path, std::ios::binary) << render_svg("SNR improvement, " + kind + " noise", "input noise level (dB)",
                                                        "SNR improvement (dB)", curves);
    svgs.push_back(path);
  }
  return svgs;
}

}  // namespace lungdn::report
