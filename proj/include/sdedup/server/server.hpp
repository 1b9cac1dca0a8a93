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
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdedup/index/index.hpp"
#include "sdedup/protocol/exchange.hpp"
#include "sdedup/server/rate_limit.hpp"
#include "sdedup/server/store.hpp"

namespace sdedup::server {

struct ServerConfig {
  DedupConfig dedup;
  int pake_bits = 2048;
  double rate = 1;    // queries per second per user
  double burst = 60;  // bucket capacity
  std::uint64_t quota_bytes = std::uint64_t{1} << 30;
  std::chrono::milliseconds phase_timeout = proto::kDefaultPhaseTimeout;
  // Empty: nothing touches the disk.
  std::filesystem::path data_dir;
  // Commits between checkpoints; 0 disables periodic checkpoints.
  std::uint64_t checkpoint_every = 4096;
  NowFn now;
  CrashHook crash_hook;
};

// Test-only misbehaviour.
struct Faults {
  // Answer Duplicate even when nothing matched, against the most recent
  // image that has an online holder.
  std::atomic<bool> force_duplicate{false};
  // Flip a byte of every CT sent.
  std::atomic<bool> corrupt_ciphertext{false};
};

struct ImageRecord {
  ImageId image_ref = 0;
  Digest32 blob{};
  std::uint64_t size = 0;
  GenerationId generation = 0;
  // Original uploader first; grows only through completed exchanges.
  std::vector<std::string> access_holders;
  std::vector<std::uint64_t> exchange_counts;
};

// Online holder with the fewest exchanges served, ties by list order.
std::optional<std::size_t> select_counterpart(const ImageRecord& image,
                                              const std::function<bool(const std::string&)>& online);

struct ServerStats {
  std::uint64_t uploads_committed = 0;
  std::uint64_t exchanges_opened = 0;
  std::uint64_t exchanges_completed = 0;
  std::uint64_t exchanges_aborted = 0;
  std::uint64_t auth_failures = 0;
  std::uint64_t holder_fallbacks = 0;  // duplicate with no holder online
  std::uint64_t rate_limited = 0;
};

// Transport-independent server state machine. Every connection feeds its
// frames to handle(); replies leave through the connection's sink in the
// order the state changes happened.
class ServerCore {
 public:
  using ConnId = std::uint64_t;
  using Sink = std::function<void(const proto::Message&)>;

  // Restores from config.data_dir. Throws Error(kCorruptSnapshot) on a
  // damaged checkpoint or a log that references missing blobs.
  explicit ServerCore(ServerConfig config);
  ~ServerCore();
  ServerCore(const ServerCore&) = delete;
  ServerCore& operator=(const ServerCore&) = delete;

  ConnId attach(Sink sink);
  void detach(ConnId conn);
  // False when the connection must be closed.
  bool handle(ConnId conn, const proto::Message& m);
  // For a frame that did not parse: sends ABORT{Malformed}. Close afterwards.
  void reject(ConnId conn);
  // Expires exchanges and stale pending uploads.
  void tick();

  void checkpoint();

  const ServerConfig& config() const { return config_; }
  Faults& faults() { return faults_; }
  RateLimiter& limiter() { return limiter_; }
  ServerStats stats() const;
  proto::Params params() const;

  std::size_t image_count() const;
  bool indexed(ImageId ref) const;
  std::optional<ImageRecord> image(ImageId ref) const;
  std::vector<ImageId> image_refs() const;
  std::optional<Bytes> ciphertext(ImageId ref) const;
  std::uint64_t quota_used(const std::string& user) const;
  std::size_t pending_uploads() const;
  std::size_t live_exchanges() const;
  // Index digest plus canonical image metadata.
  Digest32 state_digest() const;

 private:
  struct Outbox;
  struct Conn;
  struct Pending;
  struct Exchange;
  class Batch;

  void restore();
  void apply_record(const WalRecord& rec);
  void log_generation(const TableGeneration& g);
  void open_next_generation();
  void maybe_checkpoint();
  void write_checkpoint();
  void rebuild_params();

  void on_get_params(ConnId conn, Batch& out);
  void on_hello(ConnId conn, const proto::Hello& m);
  void on_upload_hashes(ConnId conn, const proto::UploadHashes& m, Batch& out);
  void on_upload_ct(ConnId conn, const proto::UploadCt& m, Batch& out);
  void on_fetch_ct(ConnId conn, const proto::FetchCt& m, Batch& out);
  void on_exchange_message(ConnId conn, proto::ExchangeId id, const proto::Message& m, Batch& out);
  void on_exchange_done(ConnId conn, const proto::ExchangeDone& m, Batch& out);
  void abort_exchange(Exchange& ex, proto::ReasonCode to_uploader, proto::ReasonCode to_holder,
                      Batch& out);
  bool online(const std::string& user) const;
  void hook(std::string_view point) const;

  ServerConfig config_;
  DedupConfig index_config_;  // capacity lifted; rollover is driven here
  Faults faults_;
  RateLimiter limiter_;
  BlobStore blobs_;
  std::unique_ptr<Wal> wal_;
  std::uint64_t commits_since_checkpoint_ = 0;

  // Lock order: commit_mu_, index_mu_, meta_mu_.
  mutable std::mutex commit_mu_;
  mutable std::shared_mutex index_mu_;
  std::optional<Index> index_;
  std::shared_ptr<const proto::Params> params_;

  mutable std::mutex meta_mu_;
  std::map<ImageId, ImageRecord> images_;
  std::unordered_map<std::string, std::uint64_t> quota_used_;
  std::unordered_map<ConnId, std::shared_ptr<Conn>> conns_;
  std::unordered_map<std::string, std::vector<ConnId>> serving_;
  std::map<proto::UploadToken, Pending> pending_;
  std::unordered_map<proto::ExchangeId, std::unique_ptr<Exchange>> exchanges_;
  ImageId next_image_ref_ = 1;
  proto::ExchangeId next_exchange_ = 1;
  ConnId next_conn_ = 1;
  ServerStats stats_;
};

}  // namespace sdedup::server
