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

#include "asyncdyna/servers.hpp"

#include <cstring>
#include <stdexcept>

namespace asyncdyna::coord {

// -- ParamServer ----------------------------------------------------------------

uint64_t ParamServer::push(ParamBlob blob) {
  if (blob.empty()) throw std::invalid_argument("ParamServer::push: empty blob");
  auto shared = std::make_shared<const ParamBlob>(std::move(blob));
  std::lock_guard<std::mutex> lock(mu_);
  blob_ = std::move(shared);
  version_ += 1;
  return version_;
}

std::optional<VersionedBlob> ParamServer::pull() const {
  std::lock_guard<std::mutex> lock(mu_);
  if (!blob_) return std::nullopt;
  return VersionedBlob{blob_, version_};
}

uint64_t ParamServer::version() const {
  std::lock_guard<std::mutex> lock(mu_);
  return version_;
}

// -- DataBufferServer -------------------------------------------------------------

DataBufferServer::DataBufferServer(size_t recent_states_capacity)
    : recent_cap_(recent_states_capacity) {
  if (recent_cap_ == 0) {
    throw std::invalid_argument("DataBufferServer: recent-state capacity must be > 0");
  }
}

uint64_t DataBufferServer::push(envs::Trajectory traj) {
  if (traj.transitions.empty()) {
    throw std::invalid_argument("DataBufferServer::push: empty trajectory");
  }
  std::lock_guard<std::mutex> lock(mu_);
  for (const envs::Transition& tr : traj.transitions) {
    if (recent_states_.size() < recent_cap_) {
      recent_states_.push_back(tr.s);
    } else {
      recent_states_[recent_next_] = tr.s;
      recent_next_ = (recent_next_ + 1) % recent_cap_;
    }
  }
  pending_.push_back(std::move(traj));
  total_pushed_ += 1;
  return total_pushed_;
}

std::vector<envs::Trajectory> DataBufferServer::drain() {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<envs::Trajectory> out(std::make_move_iterator(pending_.begin()),
                                    std::make_move_iterator(pending_.end()));
  pending_.clear();
  return out;
}

uint64_t DataBufferServer::total_pushed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return total_pushed_;
}

size_t DataBufferServer::pending_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return pending_.size();
}

std::vector<std::vector<double>> DataBufferServer::recent_states() const {
  std::lock_guard<std::mutex> lock(mu_);
  return recent_states_;
}

// -- messages -----------------------------------------------------------------------

void encode_message(const Message& msg, std::vector<uint8_t>* out) {
  const size_t base = out->size();
  out->resize(base + 1 + 8 + 4 + msg.payload.size());
  uint8_t* p = out->data() + base;
  p[0] = static_cast<uint8_t>(msg.type);
  std::memcpy(p + 1, &msg.version, 8);
  const uint32_t len = static_cast<uint32_t>(msg.payload.size());
  std::memcpy(p + 9, &len, 4);
  if (!msg.payload.empty()) {
    std::memcpy(p + 13, msg.payload.data(), msg.payload.size());
  }
}

Message decode_message(std::span<const uint8_t> bytes, size_t* offset) {
  if (*offset + 13 > bytes.size()) {
    throw std::invalid_argument("decode_message: truncated header");
  }
  Message msg;
  const uint8_t type = bytes[*offset];
  if (type < 1 || type > 4) {
    throw std::invalid_argument("decode_message: unknown message type");
  }
  msg.type = static_cast<MessageType>(type);
  std::memcpy(&msg.version, bytes.data() + *offset + 1, 8);
  uint32_t len = 0;
  std::memcpy(&len, bytes.data() + *offset + 9, 4);
  *offset += 13;
  if (*offset + len > bytes.size()) {
    throw std::invalid_argument("decode_message: truncated payload");
  }
  msg.payload.assign(bytes.begin() + *offset, bytes.begin() + *offset + len);
  *offset += len;
  return msg;
}

}  // namespace asyncdyna::coord
