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

#include "sdedup/protocol/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

namespace sdedup::proto {
namespace {

struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Bytes> frames;
  bool closed = false;
};

class LoopbackConnection final : public Connection {
 public:
  LoopbackConnection(std::shared_ptr<Pipe> in, std::shared_ptr<Pipe> out, Tap tap)
      : in_(std::move(in)), out_(std::move(out)), tap_(std::move(tap)) {}
  ~LoopbackConnection() override { close(); }

  void send_raw(ByteView frame) override {
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw Error(Errc::kTransport, "connection closed");
    if (tap_) tap_(frame);
    out_->frames.emplace_back(frame.begin(), frame.end());
    out_->cv.notify_one();
  }

  std::optional<Message> receive(Clock::time_point deadline) override {
    Bytes frame;
    {
      std::unique_lock lock(in_->mu);
      if (!in_->cv.wait_until(lock, deadline,
                              [&] { return !in_->frames.empty() || in_->closed; })) {
        return std::nullopt;
      }
      if (in_->frames.empty()) throw Error(Errc::kTransport, "connection closed");
      frame = std::move(in_->frames.front());
      in_->frames.pop_front();
    }
    return decode_frame(frame);
  }

  void close() override {
    for (auto* p : {in_.get(), out_.get()}) {
      std::lock_guard lock(p->mu);
      p->closed = true;
      p->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<Pipe> in_, out_;
  Tap tap_;
};

class TcpConnection final : public Connection {
 public:
  explicit TcpConnection(int fd) : fd_(fd) {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpConnection() override {
    close();
    ::close(fd_);
  }

  void send_raw(ByteView frame) override {
    std::lock_guard lock(send_mu_);
    std::size_t off = 0;
    while (off < frame.size()) {
      auto n = ::send(fd_, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(Errc::kTransport, std::string("send: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<Message> receive(Clock::time_point deadline) override {
    std::lock_guard lock(recv_mu_);
    std::uint8_t chunk[16384];
    for (;;) {
      if (auto m = buffer_.next()) return m;
      if (eof_) throw Error(Errc::kTransport, "connection closed");
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{fd_, POLLIN, 0};
      int rc = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count() + 1, 1 << 30)));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw Error(Errc::kTransport, std::string("poll: ") + std::strerror(errno));
      }
      if (rc == 0) continue;
      auto n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        eof_ = true;
        continue;
      }
      if (n == 0) {
        eof_ = true;
        continue;
      }
      buffer_.append(ByteView(chunk, static_cast<std::size_t>(n)));
    }
  }

  void close() override {
    // The fd itself is released in the destructor so a concurrent receive
    // never polls a recycled descriptor.
    ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_;
  std::mutex send_mu_, recv_mu_;
  FrameBuffer buffer_;
  bool eof_ = false;
};

std::pair<std::string, std::string> split_address(const std::string& address) {
  auto colon = address.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::kTransport, "address must be host:port");
  auto host = address.substr(0, colon);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') {
    host = host.substr(1, host.size() - 2);
  }
  return {host, address.substr(colon + 1)};
}

struct AddrInfo {
  addrinfo* head = nullptr;
  ~AddrInfo() {
    if (head) freeaddrinfo(head);
  }
};

void resolve(const std::string& address, bool passive, AddrInfo& out) {
  auto [host, port] = split_address(address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  int rc = getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(), &hints, &out.head);
  if (rc != 0) throw Error(Errc::kTransport, std::string("resolve: ") + gai_strerror(rc));
}

}  // namespace

std::pair<ConnectionPtr, ConnectionPtr> loopback_pair(Tap first_to_second, Tap second_to_first) {
  auto ab = std::make_shared<Pipe>();
  auto ba = std::make_shared<Pipe>();
  return {std::make_unique<LoopbackConnection>(ba, ab, std::move(first_to_second)),
          std::make_unique<LoopbackConnection>(ab, ba, std::move(second_to_first))};
}

ConnectionPtr tcp_connect(const std::string& address, std::chrono::milliseconds timeout) {
  AddrInfo ai;
  resolve(address, false, ai);
  std::string last = "no address";
  for (auto* a = ai.head; a; a = a->ai_next) {
    int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
    if (fd < 0) continue;
    int flags = fcntl(fd, F_GETFL);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, a->ai_addr, a->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      pollfd p{fd, POLLOUT, 0};
      rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
      int err = 0;
      socklen_t len = sizeof err;
      if (rc == 1 && getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) == 0 && err == 0) {
        rc = 0;
      } else {
        errno = rc == 0 ? ETIMEDOUT : (err ? err : errno);
        rc = -1;
      }
    }
    if (rc == 0) {
      fcntl(fd, F_SETFL, flags);
      return std::make_unique<TcpConnection>(fd);
    }
    last = std::strerror(errno);
    ::close(fd);
  }
  throw Error(Errc::kTransport, "connect " + address + ": " + last);
}

TcpListener::TcpListener(const std::string& address) {
  AddrInfo ai;
  resolve(address, true, ai);
  for (auto* a = ai.head; a; a = a->ai_next) {
    int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, SOMAXCONN) == 0) {
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  if (fd_ < 0) throw Error(Errc::kTransport, "cannot listen on " + address);
  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  getsockname(fd_, reinterpret_cast<sockaddr*>(&ss), &len);
  port_ = ntohs(ss.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port
                                         : reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
  if (::pipe2(wake_, O_CLOEXEC) != 0) throw Error(Errc::kTransport, "pipe");
}

TcpListener::~TcpListener() {
  close();
  if (fd_ >= 0) ::close(fd_);
  for (int fd : wake_) {
    if (fd >= 0) ::close(fd);
  }
}

ConnectionPtr TcpListener::accept() {
  for (;;) {
    pollfd p[2] = {{fd_, POLLIN, 0}, {wake_[0], POLLIN, 0}};
    int rc = ::poll(p, 2, -1);
    if (rc < 0) {
      if (errno == EINTR) continue;
      return nullptr;
    }
    if (p[1].revents) return nullptr;
    int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) return std::make_unique<TcpConnection>(fd);
    if (errno == EINTR || errno == ECONNABORTED || errno == EAGAIN) continue;
    // EMFILE and friends: back off briefly rather than spin.
    ::poll(nullptr, 0, 10);
  }
}

void TcpListener::close() {
  if (wake_[1] >= 0) {
    std::uint8_t b = 1;
    [[maybe_unused]] auto n = ::write(wake_[1], &b, 1);
  }
}

}  // namespace sdedup::proto
