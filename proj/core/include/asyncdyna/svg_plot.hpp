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

#ifndef ASYNCDYNA_SVG_PLOT_HPP_
#define ASYNCDYNA_SVG_PLOT_HPP_

#include <string>
#include <vector>

#include "asyncdyna/csv.hpp"

namespace asyncdyna::harness {

enum class PlotAxis { kWallClock, kSamples };

PlotAxis plot_axis_from_name(const std::string& name);

// Learning-curve chart: one line per input CSV, return on the y axis against
// wall-clock time or real environment steps. Line style follows the run mode
// recorded in the CSV metadata: solid for asynchronous runs, dashed for
// synchronous/partial ones, dotted for model-free. Aggregate CSVs get a
// shaded +-std band. Returns a standalone SVG 1.1 document.
std::string emit_plot(const std::vector<CsvFile>& csvs, PlotAxis axis);

void write_plot(const std::string& path, const std::vector<CsvFile>& csvs, PlotAxis axis);

}  // namespace asyncdyna::harness

#endif  // ASYNCDYNA_SVG_PLOT_HPP_
