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

#ifndef ASYNCDYNA_SERVERS_HPP_
#define ASYNCDYNA_SERVERS_HPP_

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "asyncdyna/envs.hpp"

namespace asyncdyna::coord {

using ParamBlob = std::vector<uint8_t>;

struct VersionedBlob {
  std::shared_ptr<const ParamBlob> blob;
  uint64_t version = 0;
};

// Versioned single-slot parameter store, last-writer-wins. Blobs are immutable
// once pushed, so pulls hand out shared snapshots without copying. Safe under
// arbitrary concurrent callers; a pull never observes a torn blob and never
// waits longer than one in-flight pointer swap.
class ParamServer {
 public:
  // Returns the new version (first push returns 1). Empty blobs are rejected.
  uint64_t push(ParamBlob blob);

  // Latest snapshot, or nullopt if nothing was ever pushed. Non-blocking.
  std::optional<VersionedBlob> pull() const;

  // 0 means "nothing pushed yet".
  uint64_t version() const;

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const ParamBlob> blob_;
  uint64_t version_ = 0;
};

// Append/drain trajectory queue between the data-collection and
// model-learning workers. Also keeps a bounded ring of recently pushed states
// that the policy-improvement worker reads to seed imagined rollouts, so all
// cross-worker traffic stays on the servers.
class DataBufferServer {
 public:
  explicit DataBufferServer(size_t recent_states_capacity = 4096);

  // Appends and returns the running total of pushed trajectories.
  // Empty trajectories are rejected.
  uint64_t push(envs::Trajectory traj);

  // All pending trajectories in push order; the queue is left empty.
  // total_pushed is unaffected.
  std::vector<envs::Trajectory> drain();

  uint64_t total_pushed() const;
  size_t pending_count() const;

  // Copy of the recent-state ring (insertion order not guaranteed).
  std::vector<std::vector<double>> recent_states() const;

 private:
  mutable std::mutex mu_;
  std::deque<envs::Trajectory> pending_;
  uint64_t total_pushed_ = 0;
  std::vector<std::vector<double>> recent_states_;
  size_t recent_cap_;
  size_t recent_next_ = 0;
};

// The three servers of the framework; workers communicate exclusively
// through these.
struct Servers {
  ParamServer policy;
  ParamServer model;
  DataBufferServer data;
};

// -- message encoding ---------------------------------------------------------
// Byte-level framing for an optional socket transport: 1-byte message type,
// 8-byte little-endian version, 4-byte little-endian payload length, payload.
// The in-process backend never serializes; this exists so a remote backend
// can be added without touching worker code.

enum class MessageType : uint8_t {
  kPushParams = 1,
  kPullParams = 2,
  kPushTrajectory = 3,
  kDrain = 4,
};

struct Message {
  MessageType type = MessageType::kPullParams;
  uint64_t version = 0;
  std::vector<uint8_t> payload;
};

void encode_message(const Message& msg, std::vector<uint8_t>* out);

// Throws std::invalid_argument on truncated or unknown-type input.
Message decode_message(std::span<const uint8_t> bytes, size_t* offset);

}  // namespace asyncdyna::coord

#endif  // ASYNCDYNA_SERVERS_HPP_
