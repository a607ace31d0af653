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

#ifndef ASYNCDYNA_RUN_METRICS_HPP_
#define ASYNCDYNA_RUN_METRICS_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace asyncdyna {

// One evaluation point. In every mode except async_realtime the wall clock
// column reports virtual time, so logs of deterministic modes are
// reproducible byte for byte.
struct MetricsRow {
  double wall_clock_s = 0.0;
  double virtual_time_s = 0.0;
  uint64_t real_env_steps = 0;
  uint64_t trajectories = 0;
  double avg_eval_return = 0.0;
  double std_eval_return = 0.0;
  double model_val_loss = 0.0;
  uint64_t model_version = 0;
  uint64_t policy_version = 0;
  uint64_t imagined_steps = 0;
};

// One committed worker operation, in commit order. virtual_time is the time
// the operation's effects became visible to the other workers.
struct EventRecord {
  double virtual_time = 0.0;
  std::string worker;
  std::string op;  // rollout | train_epoch | grad_step
  uint64_t version_pulled = 0;
  uint64_t version_pushed = 0;
};

struct RunSummary {
  std::string env;
  std::string mode;
  uint64_t seed = 0;
  uint64_t trajectories = 0;
  uint64_t real_env_steps = 0;
  uint64_t imagined_steps = 0;
  double final_return_mean = 0.0;
  double final_return_std = 0.0;
  double wall_clock_s = 0.0;
  double virtual_time_s = 0.0;
  uint64_t model_pushes = 0;
  uint64_t policy_pushes = 0;
  double data_busy_s = 0.0;
  double model_busy_s = 0.0;
  double policy_busy_s = 0.0;
  uint64_t incidents = 0;
};

struct RunMetrics {
  std::vector<MetricsRow> rows;
  std::vector<EventRecord> events;
  RunSummary summary;

  // Version traces for interleaving checks: the policy version each rollout
  // used, and the model version each policy gradient step used.
  std::vector<uint64_t> data_policy_versions;
  std::vector<uint64_t> policy_model_versions;
  std::vector<double> model_val_losses;
  std::vector<std::string> incidents;
};

}  // namespace asyncdyna

#endif  // ASYNCDYNA_RUN_METRICS_HPP_
