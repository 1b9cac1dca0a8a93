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

#include "sdedup/protocol/messages.hpp"

#include <type_traits>

namespace sdedup::proto {
namespace {

template <class>
inline constexpr bool kAlwaysFalse = false;

[[noreturn]] void malformed(const char* what) { throw Error(Errc::kProtocol, what); }

ExchangeRole read_role(ByteReader& r) {
  auto v = r.u8();
  if (v > 1) malformed("bad role");
  return static_cast<ExchangeRole>(v);
}

void put_digests(ByteWriter& w, const GenerationDigests& gd) {
  w.u32(static_cast<std::uint32_t>(gd.size()));
  for (const auto& [gen, set] : gd) {
    w.u32(gen);
    w.u16(static_cast<std::uint16_t>(set.size()));
    for (const auto& d : set) w.raw(d.bytes());
  }
}

GenerationDigests get_digests(ByteReader& r) {
  GenerationDigests out;
  auto n = r.u32();
  if (n > 4096) malformed("too many generations");
  for (std::uint32_t i = 0; i < n; ++i) {
    auto gen = r.u32();
    auto count = r.u16();
    DigestSet set;
    set.reserve(count);
    for (int j = 0; j < count; ++j) set.emplace_back(r.fixed<32>());
    if (!out.emplace(gen, std::move(set)).second) malformed("repeated generation");
  }
  return out;
}

void encode_body(ByteWriter& w, const Message& m) {
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GetParams>) {
        } else if constexpr (std::is_same_v<T, Params>) {
          w.u32(v.pake_bits);
          w.u32(static_cast<std::uint32_t>(v.generations.size()));
          for (const auto& g : v.generations) {
            w.u32(g.generation_id);
            w.u16(static_cast<std::uint16_t>(g.params.size()));
            for (const auto& p : g.params) p.encode_to(w);
          }
        } else if constexpr (std::is_same_v<T, UploadHashes>) {
          w.str(v.user_id);
          w.str(v.upload_ref);
          put_digests(w, v.digests);
        } else if constexpr (std::is_same_v<T, DedupResult>) {
          if (auto* u = std::get_if<DedupUnique>(&v.outcome)) {
            w.u8(0);
            w.raw(u->upload_token);
            w.u64(u->image_ref);
          } else {
            const auto& d = std::get<DedupDuplicate>(v.outcome);
            w.u8(1);
            w.u64(d.exchange_id);
            w.u8(static_cast<std::uint8_t>(d.peer_role_hint));
            w.u32(d.collisions);
            w.u64(d.image_ref);
          }
        } else if constexpr (std::is_same_v<T, UploadCt>) {
          w.raw(v.upload_token);
          w.blob(v.ciphertext);
        } else if constexpr (std::is_same_v<T, ExchangeOpen>) {
          w.u64(v.exchange_id);
          w.u64(v.image_ref);
          w.u8(static_cast<std::uint8_t>(v.role));
          w.u32(v.pake_bits);
          w.u32(v.dim);
          w.u32(v.bits);
        } else if constexpr (std::is_same_v<T, SlshParamShare>) {
          w.u64(v.exchange_id);
          w.u8(static_cast<std::uint8_t>(v.sender_role));
          w.raw(v.seed);
          w.u32(v.dim);
          w.u32(v.bits);
        } else if constexpr (std::is_same_v<T, PakeMsg>) {
          w.u64(v.exchange_id);
          w.u8(v.session_index);
          w.blob(v.element);
        } else if constexpr (std::is_same_v<T, WrappedKeyMsg>) {
          w.u64(v.exchange_id);
          w.blob(v.wrapped);
        } else if constexpr (std::is_same_v<T, FetchCt>) {
          w.u64(v.image_ref);
        } else if constexpr (std::is_same_v<T, Ct>) {
          w.blob(v.ciphertext);
        } else if constexpr (std::is_same_v<T, Abort>) {
          w.u8(static_cast<std::uint8_t>(v.reason));
          w.u64(v.exchange_id);
        } else if constexpr (std::is_same_v<T, Ack>) {
          w.u64(v.ref);
        } else if constexpr (std::is_same_v<T, Hello>) {
          w.str(v.user_id);
          w.u8(v.serving ? 1 : 0);
        } else if constexpr (std::is_same_v<T, ExchangeDone>) {
          w.u64(v.exchange_id);
        } else {
          static_assert(kAlwaysFalse<T>);
        }
      },
      m);
}

Message decode_body(MsgType type, ByteReader& r) {
  switch (type) {
    case MsgType::kGetParams:
      return GetParams{};
    case MsgType::kParams: {
      Params p;
      p.pake_bits = r.u32();
      auto n = r.u32();
      if (n > 4096) malformed("too many generations");
      for (std::uint32_t i = 0; i < n; ++i) {
        GenerationParams g;
        g.generation_id = r.u32();
        auto t = r.u16();
        for (int j = 0; j < t; ++j) g.params.push_back(LshParams::decode(r));
        p.generations.push_back(std::move(g));
      }
      return p;
    }
    case MsgType::kUploadHashes: {
      UploadHashes u;
      u.user_id = r.str();
      u.upload_ref = r.str();
      u.digests = get_digests(r);
      return u;
    }
    case MsgType::kDedupResult: {
      auto tag = r.u8();
      if (tag == 0) {
        DedupUnique u;
        u.upload_token = r.fixed<16>();
        u.image_ref = r.u64();
        return DedupResult{u};
      }
      if (tag != 1) malformed("bad result tag");
      DedupDuplicate d;
      d.exchange_id = r.u64();
      d.peer_role_hint = read_role(r);
      d.collisions = r.u32();
      d.image_ref = r.u64();
      return DedupResult{d};
    }
    case MsgType::kUploadCt: {
      UploadCt u;
      u.upload_token = r.fixed<16>();
      u.ciphertext = r.blob();
      return u;
    }
    case MsgType::kExchangeOpen: {
      ExchangeOpen e;
      e.exchange_id = r.u64();
      e.image_ref = r.u64();
      e.role = read_role(r);
      e.pake_bits = r.u32();
      e.dim = r.u32();
      e.bits = r.u32();
      return e;
    }
    case MsgType::kSlshParamShare: {
      SlshParamShare s;
      s.exchange_id = r.u64();
      s.sender_role = read_role(r);
      s.seed = r.fixed<32>();
      s.dim = r.u32();
      s.bits = r.u32();
      return s;
    }
    case MsgType::kPakeMsg: {
      PakeMsg p;
      p.exchange_id = r.u64();
      p.session_index = r.u8();
      if (p.session_index != 1 && p.session_index != 2) malformed("bad session index");
      p.element = r.blob(4096);
      return p;
    }
    case MsgType::kWrappedKey: {
      WrappedKeyMsg k;
      k.exchange_id = r.u64();
      k.wrapped = r.blob(4096);
      return k;
    }
    case MsgType::kFetchCt:
      return FetchCt{r.u64()};
    case MsgType::kCt:
      return Ct{r.blob()};
    case MsgType::kAbort: {
      Abort a;
      auto reason = r.u8();
      if (reason > static_cast<std::uint8_t>(ReasonCode::kQuotaExceeded)) malformed("bad reason");
      a.reason = static_cast<ReasonCode>(reason);
      a.exchange_id = r.u64();
      return a;
    }
    case MsgType::kAck:
      return Ack{r.u64()};
    case MsgType::kHello: {
      Hello h;
      h.user_id = r.str();
      auto s = r.u8();
      if (s > 1) malformed("bad flag");
      h.serving = s == 1;
      return h;
    }
    case MsgType::kExchangeDone:
      return ExchangeDone{r.u64()};
  }
  malformed("unknown message type");
}

void check_header(ByteView header, std::size_t& body_len, MsgType& type) {
  ByteReader r(header);
  body_len = r.u32();
  auto version = r.u8();
  auto t = r.u8();
  if (body_len > kMaxBody) malformed("frame too large");
  if (version != kVersion) malformed("unknown version");
  if (t < 1 || t > 15) malformed("unknown message type");
  type = static_cast<MsgType>(t);
}

}  // namespace

const char* to_string(ReasonCode reason) {
  switch (reason) {
    case ReasonCode::kTimeout: return "Timeout";
    case ReasonCode::kBadToken: return "BadToken";
    case ReasonCode::kRateLimited: return "RateLimited";
    case ReasonCode::kMalformed: return "Malformed";
    case ReasonCode::kAuthFailure: return "AuthFailure";
    case ReasonCode::kPeerAborted: return "PeerAborted";
    case ReasonCode::kQuotaExceeded: return "QuotaExceeded";
  }
  return "?";
}

MsgType type_of(const Message& m) { return static_cast<MsgType>(m.index() + 1); }

const char* name_of(MsgType t) {
  static const char* const kNames[] = {"GET_PARAMS",   "PARAMS",        "UPLOAD_HASHES",
                                       "DEDUP_RESULT", "UPLOAD_CT",     "EXCHANGE_OPEN",
                                       "SLSH_PARAM_SHARE", "PAKE_MSG",  "WRAPPED_KEY",
                                       "FETCH_CT",     "CT",            "ABORT",
                                       "ACK",          "HELLO",         "EXCHANGE_DONE"};
  auto i = static_cast<int>(t);
  return i >= 1 && i <= 15 ? kNames[i - 1] : "?";
}

std::optional<ExchangeId> exchange_of(const Message& m) {
  return std::visit(
      [](const auto& v) -> std::optional<ExchangeId> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ExchangeOpen> || std::is_same_v<T, SlshParamShare> ||
                      std::is_same_v<T, PakeMsg> || std::is_same_v<T, WrappedKeyMsg> ||
                      std::is_same_v<T, ExchangeDone>) {
          return v.exchange_id;
        } else if constexpr (std::is_same_v<T, Abort>) {
          if (v.exchange_id == 0) return std::nullopt;
          return v.exchange_id;
        } else {
          return std::nullopt;
        }
      },
      m);
}

Bytes encode_frame(const Message& m) {
  ByteWriter body;
  encode_body(body, m);
  if (body.size() > kMaxBody) throw Error(Errc::kProtocol, "frame too large");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(body.size()));
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(type_of(m)));
  w.raw(body.bytes());
  return std::move(w).take();
}

Message decode_frame(ByteView frame) {
  if (frame.size() < kHeaderSize) malformed("short frame");
  std::size_t len = 0;
  MsgType type{};
  check_header(frame.first(kHeaderSize), len, type);
  if (frame.size() - kHeaderSize != len) malformed("length mismatch");
  ByteReader r(frame.subspan(kHeaderSize));
  try {
    auto m = decode_body(type, r);
    r.expect_done();
    return m;
  } catch (const Error& e) {
    if (e.code() == Errc::kProtocol) throw;
    throw Error(Errc::kProtocol, e.what());
  }
}

std::optional<Message> FrameBuffer::next() {
  if (buf_.size() < kHeaderSize) return std::nullopt;
  std::size_t len = 0;
  MsgType type{};
  check_header(ByteView(buf_).first(kHeaderSize), len, type);
  if (buf_.size() < kHeaderSize + len) return std::nullopt;
  auto m = decode_frame(ByteView(buf_).first(kHeaderSize + len));
  buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(kHeaderSize + len));
  return m;
}

}  // namespace sdedup::proto
