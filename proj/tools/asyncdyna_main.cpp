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

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asyncdyna/config.hpp"
#include "asyncdyna/csv.hpp"
#include "asyncdyna/harness.hpp"
#include "asyncdyna/svg_plot.hpp"

namespace {

// Exit codes: 0 success, 1 partial failure, 2 config error.
constexpr int kOk = 0;
constexpr int kPartialFailure = 1;
constexpr int kConfigError = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides) {
  asyncdyna::harness::ExperimentConfig config;
  try {
    config = asyncdyna::harness::parse_config(read_file(config_path));
    for (const std::string& assignment : overrides) {
      asyncdyna::harness::apply_override(&config, assignment);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }

  asyncdyna::harness::ExperimentResult result;
  try {
    result = asyncdyna::harness::run_experiment(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPartialFailure;
  }

  for (const std::string& path : result.run_csvs) {
    std::cout << "wrote " << path << "\n";
  }
  if (!result.aggregate_csv.empty()) {
    std::cout << "wrote " << result.aggregate_csv << "\n";
  }
  for (size_t i = 0; i < result.runs.size(); ++i) {
    const auto& s = result.runs[i].summary;
    std::cout << "seed " << s.seed << ": trajectories=" << s.trajectories
              << " real_steps=" << s.real_env_steps
              << " final_return=" << asyncdyna::harness::format_double(s.final_return_mean)
              << " wall_clock_s=" << asyncdyna::harness::format_double(s.wall_clock_s)
              << "\n";
  }
  for (const std::string& failure : result.failures) {
    std::cerr << "failed: " << failure << "\n";
  }
  if (result.runs.empty()) return kPartialFailure;
  return result.failures.empty() ? kOk : kPartialFailure;
}

int cmd_plot(const std::vector<std::string>& csv_paths, const std::string& axis_name,
             const std::string& out_path) {
  try {
    std::vector<asyncdyna::harness::CsvFile> csvs;
    for (const std::string& path : csv_paths) {
      csvs.push_back(asyncdyna::harness::read_csv(path));
    }
    const auto axis = asyncdyna::harness::plot_axis_from_name(axis_name);
    asyncdyna::harness::write_plot(out_path, csvs, axis);
    std::cout << "wrote " << out_path << "\n";
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPartialFailure;
  }
}

int cmd_compare(const std::string& async_path, const std::string& sync_path,
                const std::string& out_path) {
  try {
    const auto async_csv = asyncdyna::harness::read_csv(async_path);
    const auto sync_csv = asyncdyna::harness::read_csv(sync_path);
    const auto table = asyncdyna::harness::compare_summary(async_csv, sync_csv);
    std::cout << asyncdyna::harness::comparison_text(table);
    if (!out_path.empty()) {
      asyncdyna::harness::write_csv(out_path, asyncdyna::harness::comparison_csv(table));
      std::cout << "wrote " << out_path << "\n";
    }
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPartialFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asyncdyna: asynchronous model-based RL benchmark harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  CLI::App* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("config", config_path, "Path to the experiment config")->required();
  run->add_option("--set", overrides,
                  "Override a config key, e.g. --set experiment.mode=sync");

  std::vector<std::string> csv_paths;
  std::string axis = "samples";
  std::string plot_out = "plot.svg";
  CLI::App* plot = app.add_subcommand("plot", "Render learning curves to SVG");
  plot->add_option("csv", csv_paths, "Run or aggregate CSV files")->required();
  plot->add_option("--axis", axis, "x axis: wall_clock | samples");
  plot->add_option("--out", plot_out, "Output SVG path");

  std::string async_path, sync_path, compare_out;
  CLI::App* compare = app.add_subcommand("compare", "Async-vs-sync summary table");
  compare->add_option("async_csv", async_path, "Asynchronous run CSV")->required();
  compare->add_option("sync_csv", sync_path, "Synchronous run CSV")->required();
  compare->add_option("--out", compare_out, "Also write the table as CSV");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path, overrides);
  if (plot->parsed()) return cmd_plot(csv_paths, axis, plot_out);
  if (compare->parsed()) return cmd_compare(async_path, sync_path, compare_out);
  return kConfigError;
}
