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

#include <atomic>
#include <condition_variable>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

#include "sdedup/protocol/transport.hpp"
#include "sdedup/server/server.hpp"

namespace sdedup::server {

// Thread-per-connection front end for a ServerCore, plus the timer thread
// that expires exchanges.
class ServerRunner {
 public:
  explicit ServerRunner(ServerCore& core,
                        std::chrono::milliseconds tick_interval = std::chrono::milliseconds(200));
  ~ServerRunner();
  ServerRunner(const ServerRunner&) = delete;
  ServerRunner& operator=(const ServerRunner&) = delete;

  // Client end of an in-process loopback connection.
  proto::ConnectionPtr connect_local(proto::Tap client_to_server = {},
                                     proto::Tap server_to_client = {});
  // Starts accepting TCP connections; returns the bound port.
  std::uint16_t listen(const std::string& address);
  // Blocks until stop() is called from elsewhere (signal handler thread).
  void wait();
  void stop();

  ServerCore& core() { return core_; }

 private:
  void spawn(proto::ConnectionPtr conn);
  void serve(const std::shared_ptr<proto::Connection>& conn);

  ServerCore& core_;
  std::atomic<bool> stopping_{false};
  std::thread ticker_, acceptor_;
  std::unique_ptr<proto::TcpListener> listener_;

  std::mutex mu_;
  std::condition_variable cv_;
  struct Worker {
    std::shared_ptr<proto::Connection> conn;
    std::thread thread;
    bool finished = false;
  };
  std::list<Worker> workers_;
};

}  // namespace sdedup::server
