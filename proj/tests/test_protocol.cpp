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

#include <thread>

#include "doctest.h"
#include "sdedup/common/hash.hpp"
#include "sdedup/protocol/exchange.hpp"

using namespace sdedup;
using namespace sdedup::proto;

namespace {

Seed seed_of(std::uint8_t b) {
  Seed s{};
  s.fill(b);
  return s;
}

SlshDigest dg(std::uint8_t b) {
  Digest32 d{};
  d.fill(b);
  return SlshDigest(d);
}

std::vector<Message> samples() {
  UploadToken tok{};
  tok[0] = 7;
  tok[15] = 9;
  GenerationParams gp{3, {LshParams::generate(seed_of(1), 16, 24), LshParams::generate(seed_of(2), 16, 24)}};
  return {
      GetParams{},
      Params{1024, {gp}},
      UploadHashes{"alice", "ref-1", {{1, {dg(1), dg(2)}}, {2, {dg(3), dg(4)}}}},
      DedupResult{DedupUnique{tok, 42}},
      DedupResult{DedupDuplicate{5, ExchangeRole::kHolder, 6, 17}},
      UploadCt{tok, Bytes{1, 2, 3, 4}},
      ExchangeOpen{5, 17, ExchangeRole::kUploader, 2048, 160, 24},
      SlshParamShare{5, ExchangeRole::kHolder, seed_of(9), 160, 24},
      PakeMsg{5, 2, Bytes(256, 0xab)},
      WrappedKeyMsg{5, Bytes(60, 0x11)},
      FetchCt{17},
      Ct{Bytes(1000, 0x5a)},
      Abort{ReasonCode::kQuotaExceeded, 0},
      Ack{99},
      Hello{"bob", true},
      ExchangeDone{5},
  };
}

Bytes raw_frame(std::uint8_t version, std::uint8_t type, ByteView body) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(body.size()));
  w.u8(version);
  w.u8(type);
  w.raw(body);
  return std::move(w).take();
}

ExchangeIo io_for(Connection& c) {
  return {[&c](const Message& m) { c.send(m); },
          [&c](Clock::time_point d) { return c.receive(d); }};
}

FeatureVector vec(std::uint32_t seed, int dim = 160) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  std::uint32_t x = seed * 2654435761u + 1;
  for (auto& f : v) {
    x ^= x << 13;
    x ^= x >> 17;
    x ^= x << 5;
    f = (x % 1000) / 1000.0 - 0.5;
  }
  return FeatureVector::normalized(v);
}

}  // namespace

TEST_CASE("every message survives a codec round trip") {
  for (const auto& m : samples()) {
    auto frame = encode_frame(m);
    CHECK(frame[4] == kVersion);
    CHECK(frame[5] == static_cast<std::uint8_t>(type_of(m)));
    auto back = decode_frame(frame);
    CHECK(back.index() == m.index());
    CHECK(encode_frame(back) == frame);
  }
  CHECK(exchange_of(PakeMsg{77, 1, {}}) == 77u);
  CHECK_FALSE(exchange_of(Ack{1}).has_value());
}

TEST_CASE("frame header is validated") {
  auto good = encode_frame(Ack{1});
  auto bad_version = good;
  bad_version[4] = 2;
  auto expect_protocol = [](ByteView f) {
    try {
      decode_frame(f);
      FAIL("decoded");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kProtocol);
    }
  };
  expect_protocol(bad_version);
  expect_protocol(raw_frame(1, 0, {}));
  expect_protocol(raw_frame(1, 16, {}));
  // Ack needs 8 body bytes.
  expect_protocol(raw_frame(1, 13, Bytes(4, 0)));
  expect_protocol(raw_frame(1, 13, Bytes(9, 0)));
  // Unknown reason code.
  expect_protocol(raw_frame(1, 12, Bytes{9, 0, 0, 0, 0, 0, 0, 0, 0}));

  FrameBuffer fb;
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(kMaxBody + 1));
  w.u8(1);
  w.u8(11);
  fb.append(std::move(w).take());
  CHECK_THROWS_AS(fb.next(), Error);
}

TEST_CASE("frame buffer reassembles byte-at-a-time input") {
  Bytes stream;
  auto all = samples();
  for (const auto& m : all) {
    auto f = encode_frame(m);
    stream.insert(stream.end(), f.begin(), f.end());
  }
  FrameBuffer fb;
  std::vector<Message> got;
  for (auto b : stream) {
    fb.append(ByteView(&b, 1));
    while (auto m = fb.next()) got.push_back(*m);
  }
  REQUIRE(got.size() == all.size());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(encode_frame(got[i]) == encode_frame(all[i]));
  CHECK(fb.buffered() == 0);
}

TEST_CASE("exchange state only moves forward") {
  auto t0 = Clock::now();
  ExchangeState s(1, std::chrono::seconds(5), t0);
  CHECK(s.phase() == Phase::kOpened);
  s.advance(Phase::kParamsShared, t0 + std::chrono::seconds(4));
  CHECK(s.deadline() == t0 + std::chrono::seconds(9));
  CHECK_THROWS_AS(s.advance(Phase::kParamsShared), Error);
  CHECK_THROWS_AS(s.advance(Phase::kOpened), Error);
  s.advance(Phase::kPake2);
  CHECK_FALSE(s.expired(Clock::now()));
  CHECK(s.expired(Clock::now() + std::chrono::seconds(6)));
  s.abort(ReasonCode::kTimeout);
  CHECK(s.terminal());
  s.abort(ReasonCode::kMalformed);
  CHECK(s.abort_reason() == ReasonCode::kTimeout);
  CHECK_THROWS_AS(s.advance(Phase::kDone), Error);
  CHECK_FALSE(s.expired(Clock::now() + std::chrono::hours(1)));
}

namespace {

struct ExchangeRun {
  std::variant<Kek, Aborted> uploader;
  std::variant<KeyOffered, Aborted> holder;
  std::optional<Message> after;  // what the uploader read next
};

ExchangeRun run_pair(const FeatureVector& up, const FeatureVector& hold, const ImageKey& key) {
  auto [a, b] = loopback_pair();
  ExchangeOpen open{9, 3, ExchangeRole::kUploader, 1024, 160, 24};
  ExchangeSettings settings;
  settings.phase_timeout = std::chrono::seconds(10);
  std::variant<KeyOffered, Aborted> held;
  std::thread t([&, conn = b.get()] {
    auto io = io_for(*conn);
    auto o = open;
    o.role = ExchangeRole::kHolder;
    held = holder_serve(o, key, hold, io, settings);
  });
  auto io = io_for(*a);
  ExchangeState st(9, settings.phase_timeout);
  auto kek = run_key_agreement(ExchangeRole::kUploader, open, up, io, st, settings);
  std::optional<Message> next;
  if (std::holds_alternative<Kek>(kek)) next = a->receive_for(std::chrono::seconds(10));
  t.join();
  return {kek, held, next};
}

}  // namespace

TEST_CASE("key agreement between matching vectors delivers the image key") {
  auto key = gen_key();
  auto r = run_pair(vec(1), vec(1), key);
  REQUIRE(std::holds_alternative<Kek>(r.uploader));
  CHECK(std::holds_alternative<KeyOffered>(r.holder));
  REQUIRE(r.after);
  auto* w = std::get_if<WrappedKeyMsg>(&*r.after);
  REQUIRE(w);
  auto got = unwrap_key(std::get<Kek>(r.uploader), WrappedKey{Ciphertext::decode(w->wrapped)});
  CHECK(got == key);
}

TEST_CASE("key agreement between different vectors cannot unwrap") {
  auto key = gen_key();
  auto r = run_pair(vec(1), vec(2), key);
  REQUIRE(std::holds_alternative<Kek>(r.uploader));
  REQUIRE(r.after);
  auto* w = std::get_if<WrappedKeyMsg>(&*r.after);
  REQUIRE(w);
  try {
    unwrap_key(std::get<Kek>(r.uploader), WrappedKey{Ciphertext::decode(w->wrapped)});
    FAIL("unwrapped");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kAuthFailure);
  }
}

TEST_CASE("a silent peer times the exchange out") {
  auto [a, b] = loopback_pair();
  ExchangeOpen open{4, 1, ExchangeRole::kUploader, 1024, 160, 24};
  ExchangeSettings settings;
  settings.phase_timeout = std::chrono::milliseconds(100);
  auto io = io_for(*a);
  ExchangeState st(4, settings.phase_timeout);
  auto r = run_key_agreement(ExchangeRole::kUploader, open, vec(1), io, st, settings);
  REQUIRE(std::holds_alternative<Aborted>(r));
  CHECK(std::get<Aborted>(r).reason == ReasonCode::kTimeout);
  CHECK(st.phase() == Phase::kAborted);
  // Peer sees our share and then the abort.
  CHECK(std::holds_alternative<SlshParamShare>(*b->receive_for(std::chrono::seconds(1))));
  auto ab = b->receive_for(std::chrono::seconds(1));
  REQUIRE(ab);
  REQUIRE(std::holds_alternative<Abort>(*ab));
  CHECK(std::get<Abort>(*ab).reason == ReasonCode::kTimeout);
}

TEST_CASE("out-of-order message aborts as malformed") {
  auto [a, b] = loopback_pair();
  ExchangeOpen open{4, 1, ExchangeRole::kUploader, 1024, 160, 24};
  b->send(PakeMsg{4, 1, Bytes(128, 1)});
  auto io = io_for(*a);
  ExchangeState st(4);
  auto r = run_key_agreement(ExchangeRole::kUploader, open, vec(1), io, st);
  REQUIRE(std::holds_alternative<Aborted>(r));
  CHECK(std::get<Aborted>(r).reason == ReasonCode::kMalformed);
}

TEST_CASE("tcp transport carries frames both ways") {
  TcpListener l("127.0.0.1:0");
  std::thread t([&] {
    auto s = l.accept();
    auto m = s->receive_for(std::chrono::seconds(5));
    s->send(*m);
  });
  auto c = tcp_connect("127.0.0.1:" + std::to_string(l.port()));
  c->send(Ct{Bytes(200000, 3)});
  auto echo = c->receive_for(std::chrono::seconds(5));
  t.join();
  REQUIRE(echo);
  CHECK(std::get<Ct>(*echo).ciphertext == Bytes(200000, 3));
  l.close();
  CHECK(l.accept() == nullptr);
}
