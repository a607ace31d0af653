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

#include "asyncdyna/virtual_scheduler.hpp"

#include <cmath>
#include <stdexcept>

#include "asyncdyna/rng.hpp"

namespace asyncdyna::workers {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kIdle: return "idle";
    case OpKind::kRollout: return "rollout";
    case OpKind::kTrainEpoch: return "train_epoch";
    case OpKind::kGradStep: return "grad_step";
  }
  return "unknown";
}

void VirtualScheduler::add_worker(std::string name, int priority,
                                  std::function<WorkItem()> begin) {
  workers_.push_back({std::move(name), priority, std::move(begin)});
}

namespace {

int64_t to_us(double seconds) {
  if (!(seconds > 0.0)) {
    throw std::invalid_argument("virtual scheduler: operation duration must be positive");
  }
  const int64_t us = static_cast<int64_t>(std::llround(seconds * 1e6));
  return us > 0 ? us : 1;
}

}  // namespace

std::vector<EventRecord> VirtualScheduler::run(const std::function<bool()>& stop,
                                               double max_virtual_time) {
  std::priority_queue<Event, std::vector<Event>, EventAfter> queue;
  uint64_t seq = 0;
  now_us_ = 0;

  // Seeded insertion order decides ties between workers of equal priority.
  std::vector<size_t> order(workers_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed_);
  rng.shuffle(order);
  for (size_t idx : order) {
    queue.push(Event{0, workers_[idx].priority, seq++, idx, false, {}});
  }

  const int64_t max_us = static_cast<int64_t>(max_virtual_time * 1e6);
  std::vector<EventRecord> trace;

  while (!queue.empty()) {
    Event ev = queue.top();
    queue.pop();
    if (ev.t_us > max_us) {
      throw std::runtime_error("virtual scheduler: exceeded max virtual time");
    }
    now_us_ = ev.t_us;
    Worker& w = workers_[ev.worker];

    if (ev.is_commit) {
      const uint64_t pushed = ev.item.commit ? ev.item.commit() : 0;
      trace.push_back(EventRecord{now_seconds(), w.name, op_name(ev.item.kind),
                                  ev.item.version_pulled, pushed});
      if (!stop()) {
        queue.push(Event{ev.t_us, w.priority, seq++, ev.worker, false, {}});
      }
      continue;
    }

    // Begin event: the worker pulls and computes now; effects land later.
    if (stop()) continue;
    WorkItem item = w.begin();
    const int64_t dur = to_us(item.duration);
    if (item.kind == OpKind::kIdle) {
      queue.push(Event{ev.t_us + dur, w.priority, seq++, ev.worker, false, {}});
    } else {
      queue.push(Event{ev.t_us + dur, w.priority, seq++, ev.worker, true,
                       std::move(item)});
    }
  }
  return trace;
}

}  // namespace asyncdyna::workers
