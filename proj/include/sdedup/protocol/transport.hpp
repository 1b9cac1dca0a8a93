// Copyright 2026 The sdedup Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "sdedup/protocol/messages.hpp"

namespace sdedup::proto {

using Clock = std::chrono::steady_clock;

// A framed, ordered, bidirectional message pipe.
class Connection {
 public:
  virtual ~Connection() = default;

  // Safe to call from several threads. Throws Error(kTransport) once closed.
  void send(const Message& m) { send_raw(encode_frame(m)); }
  virtual void send_raw(ByteView frame) = 0;
  // nullopt on deadline. Throws Error(kTransport) when the stream ended and
  // Error(kProtocol) on a malformed frame.
  virtual std::optional<Message> receive(Clock::time_point deadline) = 0;
  std::optional<Message> receive_for(std::chrono::milliseconds timeout) {
    return receive(Clock::now() + timeout);
  }
  // Idempotent; wakes a blocked receive on either side.
  virtual void close() = 0;
};

using ConnectionPtr = std::unique_ptr<Connection>;

// Sees every encoded frame that goes over the pipe in one direction.
using Tap = std::function<void(ByteView frame)>;

// In-memory pair. Frames go through the real codec.
std::pair<ConnectionPtr, ConnectionPtr> loopback_pair(Tap first_to_second = {},
                                                      Tap second_to_first = {});

// "host:port"; throws Error(kTransport).
ConnectionPtr tcp_connect(const std::string& address, std::chrono::milliseconds timeout =
                                                          std::chrono::seconds(10));

class TcpListener {
 public:
  // Port 0 picks a free port.
  explicit TcpListener(const std::string& address);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  // Blocks; nullptr after close().
  ConnectionPtr accept();
  void close();

 private:
  int fd_ = -1;
  int wake_[2] = {-1, -1};
  std::uint16_t port_ = 0;
};

}  // namespace sdedup::proto
