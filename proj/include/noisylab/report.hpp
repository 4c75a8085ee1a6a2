#pragma once

// Report emission: fixed-column CSV, a JSON summary and self-contained SVG
// line charts. Everything here is a pure function of the run rows (and, for
// the phase sweep, the epoch curves), so `labctl report` can re-render a sweep
// from its CSV and get byte-identical files.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noisylab/bounds.hpp"
#include "noisylab/experiments.hpp"
#include "noisylab/format.hpp"
#include "noisylab/synthgen.hpp"

namespace noisylab {

// ---------------------------------------------------------------------------
// CSV.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string cell(double v) { return std::isnan(v) ? "" : format_double(v); }

inline double parse_cell(const std::string& s) { return s.empty() ? kNaN : parse_double(s); }

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace detail

/// Runs ordered by (sweep value, seed), each sweep value followed by its aggregate.
inline std::vector<ReportRow> ordered_rows(std::vector<ReportRow> runs) {
  std::sort(runs.begin(), runs.end(), [](const ReportRow& a, const ReportRow& b) {
    if (a.sweep_value != b.sweep_value) return a.sweep_value < b.sweep_value;
    return a.seed.value_or(0) < b.seed.value_or(0);
  });
  const auto aggregates = aggregate_rows(runs);
  std::vector<ReportRow> out;
  std::size_t a = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out.push_back(runs[i]);
    if (i + 1 == runs.size() || runs[i + 1].sweep_value != runs[i].sweep_value) out.push_back(aggregates[a++]);
  }
  return out;
}

inline std::string rows_csv(const std::vector<ReportRow>& rows) {
  if (rows.empty()) throw InputError("report: no rows");
  const Schema& schema = schema_for(rows.front().experiment);
  std::ostringstream o;
  o << "experiment,row_kind," << schema.sweep_name << ",seed,config_hash,note";
  for (const auto& c : schema.columns) o << ',' << c;
  o << '\n';
  for (const auto& r : rows) {
    o << r.experiment << ',' << r.row_kind << ',' << format_double(r.sweep_value) << ','
      << (r.seed ? std::to_string(*r.seed) : "") << ',' << r.config_hash << ',' << r.note;
    for (double v : r.values) o << ',' << detail::cell(v);
    o << '\n';
  }
  return o.str();
}

/// Parses a CSV written by rows_csv; aggregate rows are dropped because they
/// are recomputed from the runs.
inline std::vector<ReportRow> parse_rows_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError("report csv: empty file");
  const auto header = detail::split_csv_line(line);
  std::vector<ReportRow> runs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw InputError("report csv: ragged row");
    const Schema& schema = schema_for(cells[0]);
    if (header.size() != 6 + schema.columns.size()) throw InputError("report csv: header does not match schema");
    for (std::size_t j = 0; j < schema.columns.size(); ++j)
      if (header[6 + j] != schema.columns[j]) throw InputError("report csv: unexpected column " + header[6 + j]);
    if (cells[1] != "run") continue;
    ReportRow r;
    r.experiment = cells[0];
    r.row_kind = cells[1];
    r.sweep_value = parse_double(cells[2]);
    if (!cells[3].empty()) r.seed = parse_u64(cells[3]);
    r.config_hash = cells[4];
    r.note = cells[5];
    for (std::size_t j = 6; j < cells.size(); ++j) r.values.push_back(detail::parse_cell(cells[j]));
    runs.push_back(std::move(r));
  }
  return runs;
}

inline std::string curves_csv(const std::vector<CurvePoint>& curves) {
  std::ostringstream o;
  o << "gamma,seed,epoch,test_loss,test_zero_one,omega_member\n";
  for (const auto& p : curves)
    o << format_double(p.gamma) << ',' << p.seed << ',' << p.epoch << ',' << detail::cell(p.test_loss) << ','
      << detail::cell(p.zero_one) << ',' << detail::cell(p.omega_member) << '\n';
  return o.str();
}

inline std::vector<CurvePoint> parse_curves_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<CurvePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv_line(line);
    if (c.size() != 6) throw InputError("curves csv: expected 6 cells");
    out.push_back({parse_double(c[0]), parse_u64(c[1]), static_cast<std::size_t>(parse_u64(c[2])),
                   detail::parse_cell(c[3]), detail::parse_cell(c[4]), detail::parse_cell(c[5])});
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG line charts.
// ---------------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct Chart {
  std::string title, xlabel, ylabel;
  bool logx = false, logy = false;
  std::vector<Series> series;
};

namespace detail {

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string short_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

}  // namespace detail

/// One <polyline> per series (possibly with no points), axes, ticks and a legend.
inline std::string render_svg(const Chart& chart) {
  constexpr double W = 640, H = 420, left = 70, right = 170, top = 40, bottom = 50;
  const auto tx = [&](double v) { return chart.logx ? std::log10(v) : v; };
  const auto ty = [&](double v) { return chart.logy ? std::log10(v) : v; };
  const auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!chart.logx || x > 0) && (!chart.logy || y > 0);
  };
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : chart.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!(x0 <= x1)) x0 = 0, x1 = 1;
  if (!(y0 <= y1)) y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pw = W - left - right, ph = H - top - bottom;
  const auto px = [&](double v) { return left + (tx(v) - x0) / (x1 - x0) * pw; };
  const auto py = [&](double v) { return top + ph - (ty(v) - y0) / (y1 - y0) * ph; };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << detail::xml_escape(chart.title) << "</text>\n"
    << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
    const double gx = left + pw * k / 4.0, gy = top + ph - ph * k / 4.0;
    const double lx = chart.logx ? std::pow(10.0, fx) : fx, ly = chart.logy ? std::pow(10.0, fy) : fy;
    o << "<text x=\"" << detail::fixed(gx) << "\" y=\"" << detail::fixed(top + ph + 16)
      << "\" text-anchor=\"middle\">" << detail::short_number(lx) << "</text>\n"
      << "<text x=\"" << detail::fixed(left - 6) << "\" y=\"" << detail::fixed(gy + 4) << "\" text-anchor=\"end\">"
      << detail::short_number(ly) << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
    << detail::xml_escape(chart.xlabel + (chart.logx ? " (log)" : "")) << "</text>\n"
    << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << top + ph / 2 << ")\">" << detail::xml_escape(chart.ylabel + (chart.logy ? " (log)" : "")) << "</text>\n";
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const Series& s = chart.series[k];
    const char* color = palette[k % 10];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      o << (first ? "" : " ") << detail::fixed(px(s.x[i])) << ',' << detail::fixed(py(s.y[i]));
      first = false;
    }
    o << "\"><title>" << detail::xml_escape(s.name) << "</title></polyline>\n";
    const double ly = top + 10 + 16.0 * static_cast<double>(k);
    o << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << detail::fixed(ly) << "\" x2=\"" << left + pw + 32
      << "\" y2=\"" << detail::fixed(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << left + pw + 36 << "\" y=\"" << detail::fixed(ly + 4) << "\">" << detail::xml_escape(s.name)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Summaries.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline std::vector<double> column(const std::vector<ReportRow>& rows, const std::string& name) {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(value_of(r, name));
  return out;
}

inline std::vector<double> sweep_values(const std::vector<ReportRow>& rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.sweep_value);
  return out;
}

}  // namespace detail

struct GapCalibration {
  double C = kNaN;
  std::vector<bool> dominated;  // per aggregate, C * bound >= measured mean
  bool all_dominated = false;
};

/// Single scalar C fitted on the smallest m, then checked at every larger m.
inline GapCalibration calibrate_gap(const std::vector<ReportRow>& aggregates) {
  GapCalibration g;
  if (aggregates.empty()) return g;
  const double bound0 = value_of(aggregates.front(), "thm2_unit");
  const double gap0 = value_of(aggregates.front(), "gap");
  if (!(bound0 > 0.0) || !std::isfinite(gap0)) return g;
  g.C = calibrate_constant(gap0, bound0);
  g.all_dominated = true;
  for (const auto& a : aggregates) {
    const bool ok = g.C * value_of(a, "thm2_unit") >= value_of(a, "gap");
    g.dominated.push_back(ok);
    g.all_dominated = g.all_dominated && ok;
  }
  return g;
}

/// Mean test loss per (gamma, epoch) over seeds.
inline std::map<double, std::map<std::size_t, double>> mean_curves(const std::vector<CurvePoint>& curves) {
  std::map<double, std::map<std::size_t, std::pair<double, std::size_t>>> acc;
  for (const auto& p : curves) {
    if (std::isnan(p.test_loss)) continue;
    auto& a = acc[p.gamma][p.epoch];
    a.first += p.test_loss;
    ++a.second;
  }
  std::map<double, std::map<std::size_t, double>> out;
  for (const auto& [g, epochs] : acc)
    for (const auto& [e, a] : epochs) out[g][e] = a.first / static_cast<double>(a.second);
  return out;
}

inline nlohmann::json summary_json(const std::vector<ReportRow>& runs, bool complete, const std::string& error) {
  if (runs.empty()) throw InputError("report: no rows");
  const Schema& schema = schema_for(runs.front().experiment);
  const auto aggregates = aggregate_rows(runs);
  nlohmann::json j;
  j["experiment"] = schema.id;
  j["config_hash"] = runs.front().config_hash;
  j["complete"] = complete;
  if (!complete) j["error"] = error;
  j["run_rows"] = runs.size();
  nlohmann::json aggs = nlohmann::json::array();
  for (const auto& a : aggregates) {
    nlohmann::json row;
    row[schema.sweep_name] = a.sweep_value;
    for (std::size_t k = 0; k < schema.columns.size(); ++k) row[schema.columns[k]] = detail::number(a.values[k]);
    if (!a.note.empty()) row["notes"] = a.note;
    aggs.push_back(row);
  }
  j["aggregates"] = aggs;

  const auto x = detail::sweep_values(aggregates);
  if (schema.id == "clean-first") {
    const auto y = detail::column(aggregates, "pop_la_theta1");
    const LineFit fit = loglog_fit(x, y);
    bool decreasing = y.size() >= 2;
    for (std::size_t i = 1; i < y.size(); ++i) decreasing = decreasing && y[i] < y[i - 1];
    j["fit"] = {{"quantity", "mean population clean loss at theta_1 vs m"},
                {"slope", detail::number(fit.slope)},
                {"intercept", detail::number(fit.intercept)}};
    j["strictly_decreasing"] = decreasing;
  } else if (schema.id == "phase") {
    const EmpiricalThreshold th = empirical_threshold(aggregates);
    nlohmann::json e = {{"lower", detail::number(th.lower)},
                        {"upper", detail::number(th.upper)},
                        {"resolution", detail::number(th.resolution)},
                        {"consistent", th.consistent}};
    e["gamma"] = th.gamma ? nlohmann::json(*th.gamma) : nlohmann::json(nullptr);
    e["separating_gamma_80"] = th.separating_gamma ? nlohmann::json(*th.separating_gamma) : nlohmann::json(nullptr);
    e["separating_on_grid"] = th.separating_on_grid;
    j["gamma_star_empirical"] = e;
    double agree = 0.0, theory = 0.0;
    std::size_t k_agree = 0, k_theory = 0, degenerate = 0;
    for (const auto& r : runs) {
      const double a = value_of(r, "agree"), g = value_of(r, "gamma_star_theory");
      if (!std::isnan(a)) agree += a, ++k_agree;
      if (!std::isnan(g)) theory += g, ++k_theory;
      if (value_of(r, "degenerate") == 1.0) ++degenerate;
    }
    j["agreement_rate"] = k_agree ? nlohmann::json(agree / static_cast<double>(k_agree)) : nlohmann::json(nullptr);
    j["gamma_star_theory_mean"] =
        k_theory ? nlohmann::json(theory / static_cast<double>(k_theory)) : nlohmann::json(nullptr);
    j["degenerate_runs"] = degenerate;
  } else if (schema.id == "gap") {
    const LineFit fit = loglog_fit(x, detail::column(aggregates, "gap"));
    const GapCalibration cal = calibrate_gap(aggregates);
    j["fit"] = {{"quantity", "mean clean gradient gap at theta_1 vs m"},
                {"slope", detail::number(fit.slope)},
                {"intercept", detail::number(fit.intercept)}};
    j["calibration"] = {{"C", detail::number(cal.C)}, {"fitted_at_m", x.front()},
                        {"dominated", cal.dominated}, {"all_dominated", cal.all_dominated}};
  }
  return j;
}

inline std::vector<std::pair<std::string, Chart>> charts_for(const std::vector<ReportRow>& runs,
                                                             const std::vector<CurvePoint>& curves) {
  const Schema& schema = schema_for(runs.front().experiment);
  const auto aggregates = aggregate_rows(runs);
  const auto x = detail::sweep_values(aggregates);
  std::vector<std::pair<std::string, Chart>> out;
  const auto fit_series = [&](const std::vector<double>& y, const std::string& name) {
    const LineFit fit = loglog_fit(x, y);
    Series s{name + " (slope " + detail::short_number(fit.slope) + ")", {}, {}};
    if (std::isfinite(fit.slope))
      for (double v : x) {
        s.x.push_back(v);
        s.y.push_back(std::exp(fit.intercept) * std::pow(v, fit.slope));
      }
    return s;
  };
  if (schema.id == "clean-first") {
    Chart c{"Clean loss after one epoch", "m", "population clean loss at theta_1", true, true, {}};
    const auto y = detail::column(aggregates, "pop_la_theta1");
    c.series.push_back({"measured mean", x, y});
    c.series.push_back(fit_series(y, "least-squares fit"));
    c.series.push_back({"first-epoch bound (exact form)", x, detail::column(aggregates, "thm1_exact")});
    out.emplace_back("clean-first_loglog.svg", c);
  } else if (schema.id == "phase") {
    Chart c{"Clean test loss by epoch", "epoch", "population clean loss", false, false, {}};
    for (const auto& [g, epochs] : mean_curves(curves)) {
      Series s{"gamma = " + detail::short_number(g), {}, {}};
      for (const auto& [e, v] : epochs) {
        s.x.push_back(static_cast<double>(e));
        s.y.push_back(v);
      }
      c.series.push_back(std::move(s));
    }
    out.emplace_back("phase_loss_vs_epoch.svg", c);
  } else if (schema.id == "gap") {
    Chart c{"Clean gradient gap at theta_1", "m", "gradient gap", true, true, {}};
    const auto y = detail::column(aggregates, "gap");
    c.series.push_back({"measured mean", x, y});
    c.series.push_back(fit_series(y, "least-squares fit"));
    const GapCalibration cal = calibrate_gap(aggregates);
    Series b{"calibrated bound (C = " + detail::short_number(cal.C) + ")", {}, {}};
    for (const auto& a : aggregates) {
      b.x.push_back(a.sweep_value);
      b.y.push_back(cal.C * value_of(a, "thm2_unit"));
    }
    c.series.push_back(std::move(b));
    out.emplace_back("gap_loglog.svg", c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files.
// ---------------------------------------------------------------------------

enum class ReportFormat { csv, json, both };

struct ReportFiles {
  std::vector<std::string> written;
};

/// Writes <id>.csv, <id>_summary.json, <id>_curves.csv (phase only) and the
/// charts into `dir`. An incomplete sweep additionally gets <id>.incomplete.
inline ReportFiles emit_report(const std::vector<ReportRow>& runs, const std::vector<CurvePoint>& curves,
                               const std::string& dir, ReportFormat format, bool plots, bool complete = true,
                               const std::string& error = "") {
  if (runs.empty()) throw InputError("report: no rows");
  const std::string id = runs.front().experiment;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  ReportFiles files;
  const auto put = [&](const std::string& name, const std::string& text) {
    const std::string path = (std::filesystem::path(dir) / name).string();
    write_text_file(path, text);
    files.written.push_back(path);
  };
  if (format != ReportFormat::json) {
    put(id + ".csv", rows_csv(ordered_rows(runs)));
    if (id == "phase") put(id + "_curves.csv", curves_csv(curves));
  }
  if (format != ReportFormat::csv) put(id + "_summary.json", summary_json(runs, complete, error).dump(2) + "\n");
  if (!complete) put(id + ".incomplete", error + "\n");
  if (plots)
    for (const auto& [name, chart] : charts_for(runs, curves)) put(name, render_svg(chart));
  return files;
}

}  // namespace noisylab
