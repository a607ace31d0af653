// Copyright 2026 The asyncdyna Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "asyncdyna/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace asyncdyna::harness {

namespace {

constexpr double kWidth = 840.0;
constexpr double kHeight = 520.0;
constexpr double kMarginLeft = 80.0;
constexpr double kMarginRight = 180.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 60.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

struct Series {
  std::string label;
  std::string dash;  // SVG stroke-dasharray, empty = solid
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> band;  // +- band half-width; empty when absent
};

std::string dash_for_mode(const std::string& mode) {
  if (mode.rfind("async", 0) == 0) return "";         // solid
  if (mode == "model_free") return "2,4";             // dotted
  return "8,5";                                       // dashed: sync & partial
}

double nice_step(double span) {
  if (span <= 0.0) return 1.0;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  double step = 10.0;
  if (norm <= 1.0) step = 1.0;
  else if (norm <= 2.0) step = 2.0;
  else if (norm <= 5.0) step = 5.0;
  return step * mag;
}

std::string fmt_tick(double v) {
  std::ostringstream out;
  if (std::abs(v) >= 1000.0 || (std::abs(v) < 0.01 && v != 0.0)) {
    out.precision(3);
    out << v;
  } else {
    out.precision(4);
    out << v;
  }
  return out.str();
}

}  // namespace

PlotAxis plot_axis_from_name(const std::string& name) {
  if (name == "wall_clock") return PlotAxis::kWallClock;
  if (name == "samples") return PlotAxis::kSamples;
  throw std::invalid_argument("plot axis must be wall_clock or samples, got '" + name + "'");
}

std::string emit_plot(const std::vector<CsvFile>& csvs, PlotAxis axis) {
  if (csvs.empty()) throw std::invalid_argument("emit_plot: no input CSVs");

  std::vector<Series> series;
  for (size_t i = 0; i < csvs.size(); ++i) {
    const CsvFile& csv = csvs[i];
    if (csv.rows.empty()) throw std::invalid_argument("emit_plot: empty CSV input");
    Series s;
    const bool aggregate = csv.column("return_mean") >= 0;
    const std::string x_col =
        axis == PlotAxis::kWallClock ? "wall_clock_s" : "real_env_steps";
    s.x = csv.column_values(x_col);
    s.y = csv.column_values(aggregate ? "return_mean" : "avg_eval_return");
    if (aggregate) s.band = csv.column_values("return_std");

    std::string mode = "unknown";
    if (auto it = csv.metadata.find("mode"); it != csv.metadata.end()) mode = it->second;
    std::string env;
    if (auto it = csv.metadata.find("env"); it != csv.metadata.end()) env = it->second;
    std::string seed;
    if (auto it = csv.metadata.find("seed"); it != csv.metadata.end()) seed = it->second;
    s.label = env.empty() ? mode : env + " " + mode;
    if (!seed.empty()) s.label += " (seed " + seed + ")";
    if (aggregate) s.label += " (mean)";
    s.dash = dash_for_mode(mode);
    s.color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    series.push_back(std::move(s));
  }

  double x_min = 0.0, x_max = -1e300, y_min = 1e300, y_max = -1e300;
  for (const Series& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const double lo = s.band.empty() ? s.y[i] : s.y[i] - s.band[i];
      const double hi = s.band.empty() ? s.y[i] : s.y[i] + s.band[i];
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, lo);
      y_max = std::max(y_max, hi);
    }
  }
  if (x_max <= x_min) x_max = x_min + 1.0;
  if (y_max <= y_min) {
    y_min -= 1.0;
    y_max += 1.0;
  }
  const double y_pad = 0.05 * (y_max - y_min);
  y_min -= y_pad;
  y_max += y_pad;

  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  auto sx = [&](double x) {
    return kMarginLeft + (x - x_min) / (x_max - x_min) * plot_w;
  };
  auto sy = [&](double y) {
    return kMarginTop + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;
  };

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight
      << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n";

  // Axes.
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\""
      << kMarginLeft + plot_w << "\" y2=\"" << kMarginTop + plot_h
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\""
      << kMarginLeft << "\" y2=\"" << kMarginTop + plot_h
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";

  // Ticks and grid.
  const double x_step = nice_step(x_max - x_min);
  for (double t = std::ceil(x_min / x_step) * x_step; t <= x_max + 1e-9; t += x_step) {
    out << "<line x1=\"" << sx(t) << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\""
        << sx(t) << "\" y2=\"" << kMarginTop + plot_h + 5
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << sx(t) << "\" y=\"" << kMarginTop + plot_h + 20
        << "\" font-size=\"12\" text-anchor=\"middle\">" << fmt_tick(t) << "</text>\n";
  }
  const double y_step = nice_step(y_max - y_min);
  for (double t = std::ceil(y_min / y_step) * y_step; t <= y_max + 1e-9; t += y_step) {
    out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << sy(t) << "\" x2=\""
        << kMarginLeft + plot_w << "\" y2=\"" << sy(t)
        << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
    out << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << sy(t) + 4
        << "\" font-size=\"12\" text-anchor=\"end\">" << fmt_tick(t) << "</text>\n";
  }

  // Axis labels.
  const std::string x_label = axis == PlotAxis::kWallClock
                                  ? "wall-clock time (s)"
                                  : "real environment steps";
  out << "<text x=\"" << kMarginLeft + plot_w / 2 << "\" y=\"" << kHeight - 15
      << "\" font-size=\"14\" text-anchor=\"middle\">" << x_label << "</text>\n";
  out << "<text x=\"20\" y=\"" << kMarginTop + plot_h / 2
      << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
      << kMarginTop + plot_h / 2 << ")\">average return</text>\n";

  // Std bands first so lines draw on top.
  for (const Series& s : series) {
    if (s.band.empty()) continue;
    out << "<polygon fill=\"" << s.color << "\" fill-opacity=\"0.15\" stroke=\"none\" "
        << "points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      out << sx(s.x[i]) << ',' << sy(s.y[i] + s.band[i]) << ' ';
    }
    for (size_t i = s.x.size(); i-- > 0;) {
      out << sx(s.x[i]) << ',' << sy(s.y[i] - s.band[i]) << ' ';
    }
    out << "\"/>\n";
  }

  for (const Series& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.8\"";
    if (!s.dash.empty()) out << " stroke-dasharray=\"" << s.dash << "\"";
    out << " points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      out << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
    }
    out << "\"/>\n";
  }

  // Legend.
  double ly = kMarginTop + 10.0;
  const double lx = kMarginLeft + plot_w + 12.0;
  for (const Series& s : series) {
    out << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 28 << "\" y2=\""
        << ly << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"";
    if (!s.dash.empty()) out << " stroke-dasharray=\"" << s.dash << "\"";
    out << "/>\n";
    out << "<text x=\"" << lx + 34 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">"
        << s.label << "</text>\n";
    ly += 18.0;
  }

  out << "</svg>\n";
  return out.str();
}

void write_plot(const std::string& path, const std::vector<CsvFile>& csvs, PlotAxis axis) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << emit_plot(csvs, axis);
}

}  // namespace asyncdyna::harness
