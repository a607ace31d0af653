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

#ifndef ASYNCDYNA_VIRTUAL_SCHEDULER_HPP_
#define ASYNCDYNA_VIRTUAL_SCHEDULER_HPP_

#include <cstdint>
#include <functional>
#include <queue>
#include <string>
#include <vector>

#include "asyncdyna/run_metrics.hpp"

namespace asyncdyna::workers {

enum class OpKind { kIdle, kRollout, kTrainEpoch, kGradStep };

const char* op_name(OpKind kind);

// One unit of worker work, split into its computation (already performed by
// begin_iteration) and the push that makes it visible (commit). For kIdle
// items `duration` is the retry back-off and commit is empty.
struct WorkItem {
  OpKind kind = OpKind::kIdle;
  double duration = 0.0;  // virtual seconds; must be positive
  uint64_t version_pulled = 0;
  std::function<uint64_t()> commit;  // returns the version pushed, 0 if none
};

// Deterministic discrete-event simulation of asynchronous workers.
//
// Each worker's begin function pulls at the current virtual time, performs
// one operation, and returns a WorkItem; the scheduler makes the item's push
// visible `duration` virtual seconds later and immediately begins the
// worker's next iteration. Simultaneous events are ordered by worker
// priority, then by a seeded insertion order, so two runs with the same seed
// replay the exact same interleaving. Virtual time is kept in integer
// microseconds.
class VirtualScheduler {
 public:
  explicit VirtualScheduler(uint64_t seed = 0) : seed_(seed) {}

  // Lower priority values run first on ties (data < model < policy).
  void add_worker(std::string name, int priority, std::function<WorkItem()> begin);

  // Runs until `stop` holds and all in-flight operations have committed, or
  // until the event queue drains. Throws if virtual time exceeds
  // `max_virtual_time` (a livelock guard).
  std::vector<EventRecord> run(const std::function<bool()>& stop,
                               double max_virtual_time = 1e9);

  // Virtual time of the most recently processed event, in seconds; valid
  // inside commit callbacks.
  double now_seconds() const { return static_cast<double>(now_us_) * 1e-6; }

 private:
  struct Worker {
    std::string name;
    int priority = 0;
    std::function<WorkItem()> begin;
  };

  struct Event {
    int64_t t_us = 0;
    int priority = 0;
    uint64_t seq = 0;
    size_t worker = 0;
    bool is_commit = false;
    WorkItem item;
  };

  struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
      if (a.t_us != b.t_us) return a.t_us > b.t_us;
      if (a.priority != b.priority) return a.priority > b.priority;
      return a.seq > b.seq;
    }
  };

  uint64_t seed_;
  std::vector<Worker> workers_;
  int64_t now_us_ = 0;
};

}  // namespace asyncdyna::workers

#endif  // ASYNCDYNA_VIRTUAL_SCHEDULER_HPP_
