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

#include "asyncdyna/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace asyncdyna::harness {

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string run_csv_text(const RunMetrics& metrics, double env_dt, int env_horizon) {
  std::ostringstream out;
  out << "# asyncdyna-run\n";
  out << "# env = " << metrics.summary.env << "\n";
  out << "# dt = " << format_double(env_dt) << "\n";
  out << "# horizon = " << env_horizon << "\n";
  out << "# mode = " << metrics.summary.mode << "\n";
  out << "# seed = " << metrics.summary.seed << "\n";
  out << kRunCsvHeader << "\n";
  for (const MetricsRow& r : metrics.rows) {
    out << format_double(r.wall_clock_s) << ',' << format_double(r.virtual_time_s) << ','
        << r.real_env_steps << ',' << r.trajectories << ','
        << format_double(r.avg_eval_return) << ',' << format_double(r.std_eval_return)
        << ',' << format_double(r.model_val_loss) << ',' << r.model_version << ','
        << r.policy_version << ',' << r.imagined_steps << "\n";
  }
  return out.str();
}

void write_run_csv(const std::string& path, const RunMetrics& metrics, double env_dt,
                   int env_horizon) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << run_csv_text(metrics, env_dt, env_horizon);
}

std::string trace_text(const std::vector<EventRecord>& events) {
  std::ostringstream out;
  out << "virtual_time_s,worker,op,version_pulled,version_pushed\n";
  for (const EventRecord& e : events) {
    out << format_double(e.virtual_time) << ',' << e.worker << ',' << e.op << ','
        << e.version_pulled << ',' << e.version_pushed << "\n";
  }
  return out.str();
}

void write_trace(const std::string& path, const std::vector<EventRecord>& events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << trace_text(events);
}

int CsvFile::column(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<double> CsvFile::column_values(const std::string& name) const {
  const int idx = column(name);
  if (idx < 0) throw std::invalid_argument("csv: no column named " + name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row[idx]);
  return out;
}

CsvFile parse_csv(const std::string& text) {
  CsvFile file;
  std::stringstream stream(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(stream, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const size_t eq = line.find('=');
      if (eq != std::string::npos) {
        std::string key = line.substr(1, eq - 1);
        std::string value = line.substr(eq + 1);
        const auto strip = [](std::string& s) {
          while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
          while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
        };
        strip(key);
        strip(value);
        file.metadata[key] = value;
      }
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!header_seen) {
      file.columns = cells;
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const std::string& c : cells) {
      try {
        row.push_back(std::stod(c));
      } catch (...) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    if (row.size() != file.columns.size()) {
      throw std::invalid_argument("csv: row width does not match header");
    }
    file.rows.push_back(std::move(row));
  }
  if (!header_seen) throw std::invalid_argument("csv: missing header row");
  return file;
}

CsvFile read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str());
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (xs.empty() || xs.size() != ys.size()) {
    throw std::invalid_argument("interpolate: bad inputs");
  }
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  // xs non-decreasing by construction of run logs.
  const auto it = std::lower_bound(xs.begin(), xs.end(), x);
  const size_t hi = static_cast<size_t>(it - xs.begin());
  const size_t lo = hi - 1;
  if (xs[hi] == xs[lo]) return ys[lo];
  const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + w * (ys[hi] - ys[lo]);
}

CsvFile aggregate_runs(const std::vector<CsvFile>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate_runs: no runs");

  // Common grid: union of trajectory abscissae clipped to the overlap.
  std::set<double> grid_set;
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  for (const CsvFile& run : runs) {
    const std::vector<double> t = run.column_values("trajectories");
    if (t.empty()) throw std::invalid_argument("aggregate_runs: empty run");
    lo = std::max(lo, t.front());
    hi = std::min(hi, t.back());
    for (double v : t) grid_set.insert(v);
  }
  std::vector<double> grid;
  for (double v : grid_set) {
    if (v >= lo && v <= hi) grid.push_back(v);
  }
  if (grid.empty()) grid.push_back(lo);

  CsvFile out;
  out.columns = {"trajectories", "wall_clock_s", "virtual_time_s", "real_env_steps",
                 "return_mean", "return_std"};
  for (double g : grid) {
    double wall = 0.0, vt = 0.0, steps = 0.0, mean = 0.0, m2 = 0.0;
    std::vector<double> returns;
    for (const CsvFile& run : runs) {
      const std::vector<double> t = run.column_values("trajectories");
      wall += interpolate(t, run.column_values("wall_clock_s"), g);
      vt += interpolate(t, run.column_values("virtual_time_s"), g);
      steps += interpolate(t, run.column_values("real_env_steps"), g);
      returns.push_back(interpolate(t, run.column_values("avg_eval_return"), g));
    }
    const double n = static_cast<double>(runs.size());
    for (double r : returns) mean += r;
    mean /= n;
    for (double r : returns) m2 += (r - mean) * (r - mean);
    out.rows.push_back({g, wall / n, vt / n, steps / n, mean, std::sqrt(m2 / n)});
  }
  out.metadata["aggregate_of"] = std::to_string(runs.size());
  if (!runs.front().metadata.empty()) {
    auto copy_key = [&](const std::string& key) {
      const auto it = runs.front().metadata.find(key);
      if (it != runs.front().metadata.end()) out.metadata[key] = it->second;
    };
    copy_key("env");
    copy_key("mode");
    copy_key("dt");
    copy_key("horizon");
  }
  return out;
}

std::string csv_text(const CsvFile& file) {
  std::ostringstream out;
  for (const auto& [key, value] : file.metadata) {
    out << "# " << key << " = " << value << "\n";
  }
  for (size_t i = 0; i < file.columns.size(); ++i) {
    if (i) out << ',';
    out << file.columns[i];
  }
  out << "\n";
  for (const auto& row : file.rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << format_double(row[i]);
    }
    out << "\n";
  }
  return out.str();
}

void write_csv(const std::string& path, const CsvFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << csv_text(file);
}

}  // namespace asyncdyna::harness
