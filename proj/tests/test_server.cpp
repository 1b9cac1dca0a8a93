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

#include <deque>
#include <fstream>
#include <mutex>

#include "doctest.h"
#include "sdedup/common/hash.hpp"
#include "sdedup/server/server.hpp"

using namespace sdedup;
using namespace sdedup::proto;
using namespace sdedup::server;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

struct FakeClock {
  Clock::time_point t = Clock::time_point{} + std::chrono::hours(1);
  NowFn fn() {
    return [this] { return t; };
  }
};

// A ServerCore with in-memory connections whose replies queue up per
// connection.
struct Harness {
  explicit Harness(ServerConfig cfg) : core(std::move(cfg)) {}

  ServerCore::ConnId connect() {
    auto q = std::make_shared<std::deque<Message>>();
    auto id = core.attach([q, this](const Message& m) {
      std::lock_guard lock(mu);
      q->push_back(m);
    });
    inbox[id] = q;
    return id;
  }
  std::optional<Message> pop(ServerCore::ConnId c) {
    std::lock_guard lock(mu);
    auto& q = *inbox.at(c);
    if (q.empty()) return std::nullopt;
    auto m = q.front();
    q.pop_front();
    return m;
  }
  template <class T>
  T expect(ServerCore::ConnId c) {
    auto m = pop(c);
    REQUIRE(m.has_value());
    INFO("got " << name_of(type_of(*m)));
    REQUIRE(std::holds_alternative<T>(*m));
    return std::get<T>(*m);
  }
  bool idle(ServerCore::ConnId c) {
    std::lock_guard lock(mu);
    return inbox.at(c)->empty();
  }

  GenerationDigests digests(std::uint64_t base) {
    GenerationDigests g;
    for (const auto& gen : core.params().generations) {
      DigestSet s;
      for (std::size_t x = 0; x < gen.params.size(); ++x) {
        Digest32 d{};
        for (int i = 0; i < 8; ++i) d[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(base >> (8 * i));
        d[31] = static_cast<std::uint8_t>(x);
        s.emplace_back(d);
      }
      g[gen.generation_id] = s;
    }
    return g;
  }

  // Full unique upload; returns the image ref.
  ImageId store(ServerCore::ConnId c, const std::string& user, std::uint64_t base, Bytes ct) {
    core.handle(c, UploadHashes{user, "r", digests(base)});
    auto res = expect<DedupResult>(c);
    auto u = std::get<DedupUnique>(res.outcome);
    core.handle(c, UploadCt{u.upload_token, std::move(ct)});
    auto ack = expect<Ack>(c);
    CHECK(ack.ref == u.image_ref);
    return u.image_ref;
  }

  std::mutex mu;
  ServerCore core;
  std::map<ServerCore::ConnId, std::shared_ptr<std::deque<Message>>> inbox;
};

ServerConfig base_config() {
  ServerConfig cfg;
  cfg.dedup = DedupConfig::with_defaults(6, 24);
  cfg.burst = 1000;
  cfg.rate = 1000;
  return cfg;
}

struct TempDir {
  TempDir() {
    std::array<std::uint8_t, 8> r{};
    secure_random(r);
    path = fs::temp_directory_path() / ("sdedup-test-" + to_hex(r));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path path;
};

}  // namespace

TEST_CASE("token bucket refills at the configured rate") {
  FakeClock clk;
  RateLimiter rl(3, 1, clk.fn());
  for (int i = 0; i < 3; ++i) CHECK(rl.check_rate("u") == RateDecision::kAllowed);
  CHECK(rl.check_rate("u") == RateDecision::kRateLimited);
  CHECK(rl.check_rate("v") == RateDecision::kAllowed);  // buckets are per user
  clk.t += 999ms;
  CHECK(rl.check_rate("u") == RateDecision::kRateLimited);
  clk.t += 1ms;
  CHECK(rl.check_rate("u") == RateDecision::kAllowed);
  clk.t += 1h;
  CHECK(rl.tokens("u") == doctest::Approx(3));  // capped at burst

  // Fractional rates accumulate without drift.
  RateLimiter slow(1, 0.3, clk.fn());
  CHECK(slow.check_rate("u") == RateDecision::kAllowed);
  for (int i = 0; i < 3; ++i) {
    clk.t += 1s;
    CHECK(slow.check_rate("u") == RateDecision::kRateLimited);
  }
  clk.t += 334ms;
  CHECK(slow.check_rate("u") == RateDecision::kAllowed);
}

TEST_CASE("counterpart selection balances load over online holders") {
  ImageRecord img;
  img.access_holders = {"a", "b", "c"};
  img.exchange_counts = {2, 1, 1};
  auto all = [](const std::string&) { return true; };
  CHECK(select_counterpart(img, all) == 1u);
  CHECK(select_counterpart(img, [](const std::string& u) { return u != "b"; }) == 2u);
  CHECK(select_counterpart(img, [](const std::string& u) { return u == "a"; }) == 0u);
  CHECK_FALSE(select_counterpart(img, [](const std::string&) { return false; }).has_value());

  // Repeated selection spreads exchanges evenly.
  img.exchange_counts = {0, 0, 0};
  for (int i = 0; i < 30; ++i) ++img.exchange_counts[*select_counterpart(img, all)];
  CHECK(img.exchange_counts == std::vector<std::uint64_t>{10, 10, 10});
}

TEST_CASE("unique upload, commit and fetch") {
  Harness h(base_config());
  auto a = h.connect();
  h.core.handle(a, GetParams{});
  auto p = h.expect<Params>(a);
  CHECK(p.generations.size() == 1);
  CHECK(p.generations[0].params.size() == 6);

  auto ref = h.store(a, "alice", 1, Bytes(100, 7));
  CHECK(h.core.indexed(ref));
  CHECK(h.core.quota_used("alice") == 100);

  h.core.handle(a, FetchCt{ref});
  CHECK(h.expect<Ct>(a).ciphertext == Bytes(100, 7));

  // Someone without access gets nothing.
  auto b = h.connect();
  h.core.handle(b, Hello{"bob", false});
  h.core.handle(b, FetchCt{ref});
  CHECK(h.expect<Abort>(b).reason == ReasonCode::kBadToken);
}

TEST_CASE("upload tokens are single use and bound to the uploader") {
  Harness h(base_config());
  auto a = h.connect();
  h.core.handle(a, UploadHashes{"alice", "r", h.digests(1)});
  auto u = std::get<DedupUnique>(h.expect<DedupResult>(a).outcome);
  CHECK(h.core.pending_uploads() == 1);

  auto b = h.connect();
  h.core.handle(b, Hello{"bob", false});
  h.core.handle(b, UploadCt{u.upload_token, Bytes(10, 1)});
  CHECK(h.expect<Abort>(b).reason == ReasonCode::kBadToken);

  h.core.handle(a, UploadCt{u.upload_token, Bytes(10, 1)});
  h.expect<Ack>(a);
  h.core.handle(a, UploadCt{u.upload_token, Bytes(10, 1)});
  CHECK(h.expect<Abort>(a).reason == ReasonCode::kBadToken);
  UploadToken made_up{};
  made_up.fill(3);
  h.core.handle(a, UploadCt{made_up, Bytes(10, 1)});
  CHECK(h.expect<Abort>(a).reason == ReasonCode::kBadToken);
  CHECK(h.core.image_count() == 1);
}

TEST_CASE("quota caps stored bytes per user") {
  auto cfg = base_config();
  cfg.quota_bytes = 150;
  Harness h(cfg);
  auto a = h.connect();
  h.store(a, "alice", 1, Bytes(100, 1));
  h.core.handle(a, UploadHashes{"alice", "r", h.digests(2)});
  auto u = std::get<DedupUnique>(h.expect<DedupResult>(a).outcome);
  h.core.handle(a, UploadCt{u.upload_token, Bytes(100, 2)});
  CHECK(h.expect<Abort>(a).reason == ReasonCode::kQuotaExceeded);
  CHECK(h.core.quota_used("alice") == 100);
  CHECK(h.core.image_count() == 1);
}

TEST_CASE("rate limit answers ABORT RateLimited") {
  FakeClock clk;
  auto cfg = base_config();
  cfg.burst = 2;
  cfg.rate = 1;
  cfg.now = clk.fn();
  Harness h(cfg);
  auto a = h.connect();
  for (int i = 0; i < 2; ++i) {
    h.core.handle(a, UploadHashes{"alice", "r", h.digests(10 + i)});
    h.expect<DedupResult>(a);
  }
  h.core.handle(a, UploadHashes{"alice", "r", h.digests(12)});
  CHECK(h.expect<Abort>(a).reason == ReasonCode::kRateLimited);
  CHECK(h.core.stats().rate_limited == 1);
  clk.t += 1s;
  h.core.handle(a, UploadHashes{"alice", "r", h.digests(12)});
  h.expect<DedupResult>(a);
}

TEST_CASE("duplicate opens an exchange and relays it verbatim") {
  Harness h(base_config());
  auto a = h.connect();
  auto ref = h.store(a, "alice", 1, Bytes(64, 9));
  auto serve = h.connect();
  h.core.handle(serve, Hello{"alice", true});

  auto b = h.connect();
  h.core.handle(b, UploadHashes{"bob", "r", h.digests(1)});
  auto dup = std::get<DedupDuplicate>(h.expect<DedupResult>(b).outcome);
  CHECK(dup.image_ref == ref);
  CHECK(dup.collisions == 6);
  auto open_b = h.expect<ExchangeOpen>(b);
  auto open_a = h.expect<ExchangeOpen>(serve);
  CHECK(open_b.role == ExchangeRole::kUploader);
  CHECK(open_a.role == ExchangeRole::kHolder);
  CHECK(open_a.exchange_id == dup.exchange_id);
  CHECK(open_a.image_ref == ref);

  const auto id = dup.exchange_id;
  auto relay = [&](ServerCore::ConnId from, ServerCore::ConnId to, const Message& m) {
    h.core.handle(from, m);
    auto got = h.pop(to);
    REQUIRE(got);
    CHECK(encode_frame(*got) == encode_frame(m));
  };
  Seed s1{}, s2{};
  s1.fill(1);
  s2.fill(2);
  relay(b, serve, SlshParamShare{id, ExchangeRole::kUploader, s1, 160, 24});
  relay(serve, b, SlshParamShare{id, ExchangeRole::kHolder, s2, 160, 24});
  relay(b, serve, PakeMsg{id, 1, Bytes(256, 1)});
  relay(serve, b, PakeMsg{id, 1, Bytes(256, 2)});
  // Before the key is wrapped the uploader may not read the ciphertext.
  h.core.handle(b, FetchCt{ref});
  CHECK(h.expect<Abort>(b).reason == ReasonCode::kBadToken);
  relay(b, serve, PakeMsg{id, 2, Bytes(256, 3)});
  relay(serve, b, PakeMsg{id, 2, Bytes(256, 4)});
  relay(serve, b, WrappedKeyMsg{id, Bytes(60, 5)});
  h.core.handle(b, FetchCt{ref});
  CHECK(h.expect<Ct>(b).ciphertext == Bytes(64, 9));
  h.core.handle(b, ExchangeDone{id});
  CHECK(h.expect<Ack>(b).ref == ref);

  auto img = *h.core.image(ref);
  CHECK(img.access_holders == std::vector<std::string>{"alice", "bob"});
  CHECK(h.core.stats().exchanges_completed == 1);
  CHECK(h.idle(serve));
}

TEST_CASE("relay rejects messages out of phase") {
  Harness h(base_config());
  auto a = h.connect();
  h.store(a, "alice", 1, Bytes(8, 1));
  auto serve = h.connect();
  h.core.handle(serve, Hello{"alice", true});
  auto b = h.connect();
  h.core.handle(b, UploadHashes{"bob", "r", h.digests(1)});
  auto id = std::get<DedupDuplicate>(h.expect<DedupResult>(b).outcome).exchange_id;
  h.expect<ExchangeOpen>(b);
  h.expect<ExchangeOpen>(serve);

  h.core.handle(b, PakeMsg{id, 1, Bytes(256, 1)});  // skipped the share
  CHECK(h.expect<Abort>(b).reason == ReasonCode::kMalformed);
  CHECK(h.expect<Abort>(serve).reason == ReasonCode::kMalformed);
  CHECK(h.core.stats().exchanges_aborted == 1);
  // A stranger cannot inject into an exchange.
  auto c = h.connect();
  h.core.handle(c, Hello{"carol", false});
  h.core.handle(c, ExchangeDone{id});
  CHECK(h.expect<Abort>(c).reason == ReasonCode::kBadToken);
}

TEST_CASE("an exchange that stalls is aborted with Timeout on both sides") {
  FakeClock clk;
  auto cfg = base_config();
  cfg.now = clk.fn();
  cfg.phase_timeout = 5s;
  Harness h(cfg);
  auto a = h.connect();
  h.store(a, "alice", 1, Bytes(8, 1));
  auto serve = h.connect();
  h.core.handle(serve, Hello{"alice", true});
  auto b = h.connect();
  h.core.handle(b, UploadHashes{"bob", "r", h.digests(1)});
  h.expect<DedupResult>(b);
  h.expect<ExchangeOpen>(b);
  h.expect<ExchangeOpen>(serve);
  CHECK(h.core.live_exchanges() == 1);
  clk.t += 4s;
  h.core.tick();
  CHECK(h.idle(b));
  clk.t += 2s;
  h.core.tick();
  CHECK(h.expect<Abort>(b).reason == ReasonCode::kTimeout);
  CHECK(h.expect<Abort>(serve).reason == ReasonCode::kTimeout);
  h.core.tick();
  CHECK(h.core.live_exchanges() == 0);
}

TEST_CASE("no online holder falls back to a unique upload") {
  Harness h(base_config());
  auto a = h.connect();
  h.store(a, "alice", 1, Bytes(8, 1));
  auto b = h.connect();
  h.core.handle(b, UploadHashes{"bob", "r", h.digests(1)});
  CHECK(std::holds_alternative<DedupUnique>(h.expect<DedupResult>(b).outcome));
  CHECK(h.core.stats().holder_fallbacks == 1);
  // The uploader is never its own counterpart.
  auto serve = h.connect();
  h.core.handle(serve, Hello{"alice", true});
  h.core.handle(a, UploadHashes{"alice", "r", h.digests(1)});
  CHECK(std::holds_alternative<DedupUnique>(h.expect<DedupResult>(a).outcome));
}

TEST_CASE("full generation rolls over and stale clients get PARAMS") {
  auto cfg = base_config();
  cfg.dedup.rollover_capacity = 2;
  Harness h(cfg);
  auto a = h.connect();
  auto old = h.digests(1);
  h.store(a, "alice", 1, Bytes(8, 1));
  h.store(a, "alice", 2, Bytes(8, 2));
  CHECK(h.core.params().generations.size() == 2);
  h.core.handle(a, UploadHashes{"alice", "r", old});
  CHECK(h.expect<Params>(a).generations.size() == 2);
  // Images in the old generation are still found.
  auto serve = h.connect();
  h.core.handle(serve, Hello{"alice", true});
  auto b = h.connect();
  h.core.handle(b, UploadHashes{"bob", "r", h.digests(2)});
  CHECK(std::holds_alternative<DedupDuplicate>(h.expect<DedupResult>(b).outcome));
}

TEST_CASE("durable state survives restart, torn tails and checkpoints") {
  TempDir dir;
  auto cfg = base_config();
  cfg.data_dir = dir.path;
  cfg.checkpoint_every = 2;
  Digest32 before{};
  std::vector<ImageId> refs;
  {
    Harness h(cfg);
    CHECK(h.core.params().generations.size() == 1);
    auto a = h.connect();
    for (std::uint64_t i = 1; i <= 5; ++i) refs.push_back(h.store(a, "alice", i, Bytes(20, static_cast<std::uint8_t>(i))));
    before = h.core.state_digest();
  }
  {
    std::ofstream wal(dir.path / "wal.log", std::ios::app | std::ios::binary);
    wal.write("\x20\x00\x00\x00garbage", 11);
  }
  for (int round = 0; round < 2; ++round) {
    Harness h(cfg);
    CHECK(h.core.state_digest() == before);
    CHECK(h.core.image_count() == 5);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      CHECK(h.core.ciphertext(refs[i]) == Bytes(20, static_cast<std::uint8_t>(i + 1)));
    }
  }
  // Without the checkpoint the log alone rebuilds the same state.
  fs::remove(dir.path / "checkpoint.bin");
  Harness h(cfg);
  CHECK(h.core.state_digest() == before);
  auto a = h.connect();
  auto next = h.store(a, "alice", 99, Bytes(3, 3));
  CHECK(next > refs.back());
}

TEST_CASE("a missing committed blob refuses to start") {
  TempDir dir;
  auto cfg = base_config();
  cfg.data_dir = dir.path;
  {
    Harness h(cfg);
    auto a = h.connect();
    h.store(a, "alice", 1, Bytes(20, 1));
  }
  for (const auto& e : fs::recursive_directory_iterator(dir.path / "blobs")) {
    if (e.is_regular_file()) fs::remove(e.path());
  }
  try {
    ServerCore core(cfg);
    FAIL("started");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kCorruptSnapshot);
  }
}
