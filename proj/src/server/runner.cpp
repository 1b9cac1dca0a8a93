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

#include "sdedup/server/runner.hpp"

namespace sdedup::server {

ServerRunner::ServerRunner(ServerCore& core, std::chrono::milliseconds tick_interval)
    : core_(core) {
  ticker_ = std::thread([this, tick_interval] {
    std::unique_lock lock(mu_);
    while (!stopping_) {
      cv_.wait_for(lock, tick_interval);
      if (stopping_) break;
      lock.unlock();
      core_.tick();
      lock.lock();
      // Reap connection threads that have finished.
      for (auto it = workers_.begin(); it != workers_.end();) {
        if (it->finished) {
          it->thread.join();
          it = workers_.erase(it);
        } else {
          ++it;
        }
      }
    }
  });
}

ServerRunner::~ServerRunner() { stop(); }

void ServerRunner::serve(const std::shared_ptr<proto::Connection>& shared) {
  // The sink owns a reference: a reply batch can outlive this thread.
  auto id = core_.attach([shared](const proto::Message& m) { shared->send(m); });
  auto& conn = *shared;
  for (;;) {
    std::optional<proto::Message> m;
    try {
      m = conn.receive_for(std::chrono::milliseconds(500));
    } catch (const Error& e) {
      if (e.code() == Errc::kProtocol) core_.reject(id);
      break;
    }
    if (!m) {
      if (stopping_) break;
      continue;
    }
    bool keep = true;
    try {
      keep = core_.handle(id, *m);
    } catch (const std::exception&) {
      keep = false;
    }
    if (!keep) break;
  }
  core_.detach(id);
  conn.close();
}

void ServerRunner::spawn(proto::ConnectionPtr conn) {
  std::lock_guard lock(mu_);
  if (stopping_) return;
  auto& w = workers_.emplace_back();
  w.conn = std::move(conn);
  w.thread = std::thread([this, &w] {
    serve(w.conn);
    std::lock_guard lock(mu_);
    w.finished = true;
  });
}

proto::ConnectionPtr ServerRunner::connect_local(proto::Tap client_to_server,
                                                 proto::Tap server_to_client) {
  auto [client, server] = proto::loopback_pair(std::move(client_to_server),
                                               std::move(server_to_client));
  spawn(std::move(server));
  return std::move(client);
}

std::uint16_t ServerRunner::listen(const std::string& address) {
  listener_ = std::make_unique<proto::TcpListener>(address);
  auto port = listener_->port();
  acceptor_ = std::thread([this] {
    while (auto conn = listener_->accept()) spawn(std::move(conn));
  });
  return port;
}

void ServerRunner::wait() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return stopping_.load(); });
}

void ServerRunner::stop() {
  {
    std::lock_guard lock(mu_);
    if (stopping_.exchange(true)) {
      // Already stopping; still make sure this caller returns after joins.
    }
    cv_.notify_all();
  }
  if (listener_) listener_->close();
  if (acceptor_.joinable()) acceptor_.join();
  if (ticker_.joinable()) ticker_.join();
  std::list<Worker> workers;
  {
    std::lock_guard lock(mu_);
    for (auto& w : workers_) w.conn->close();
    workers.splice(workers.end(), workers_);
  }
  for (auto& w : workers) {
    if (w.thread.joinable()) w.thread.join();
  }
}

}  // namespace sdedup::server
