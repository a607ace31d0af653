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

#ifndef ASYNCDYNA_CSV_HPP_
#define ASYNCDYNA_CSV_HPP_

#include <map>
#include <string>
#include <vector>

#include "asyncdyna/run_metrics.hpp"

namespace asyncdyna::harness {

// Shortest round-trip decimal form of a double (via std::to_chars).
std::string format_double(double v);

// Run CSV: `# key = value` metadata lines, a fixed header row, one row per
// evaluation point. Column order is part of the format.
inline constexpr const char* kRunCsvHeader =
    "wall_clock_s,virtual_time_s,real_env_steps,trajectories,avg_eval_return,"
    "std_eval_return,model_val_loss,model_version,policy_version,imagined_steps";

std::string run_csv_text(const RunMetrics& metrics, double env_dt, int env_horizon);
void write_run_csv(const std::string& path, const RunMetrics& metrics, double env_dt,
                   int env_horizon);

// Event trace: one line per committed operation.
std::string trace_text(const std::vector<EventRecord>& events);
void write_trace(const std::string& path, const std::vector<EventRecord>& events);

struct CsvFile {
  std::map<std::string, std::string> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // numeric payload, row-major

  int column(const std::string& name) const;  // -1 when absent
  std::vector<double> column_values(const std::string& name) const;
};

CsvFile read_csv(const std::string& path);
CsvFile parse_csv(const std::string& text);

// Linear interpolation of (xs, ys) at x, clamped to the endpoints.
double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x);

// Mean/std across runs on a shared trajectory grid, interpolating every other
// column linearly. Columns: trajectories, wall_clock_s, virtual_time_s,
// real_env_steps, return_mean, return_std.
CsvFile aggregate_runs(const std::vector<CsvFile>& runs);

std::string csv_text(const CsvFile& file);
void write_csv(const std::string& path, const CsvFile& file);

}  // namespace asyncdyna::harness

#endif  // ASYNCDYNA_CSV_HPP_
