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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sdedup/common/bytes.hpp"
#include "sdedup/index/index.hpp"
#include "sdedup/slsh/slsh.hpp"

namespace sdedup::proto {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kMaxBody = std::size_t{64} << 20;
inline constexpr std::size_t kHeaderSize = 6;

using ExchangeId = std::uint64_t;
using UploadToken = std::array<std::uint8_t, 16>;

enum class MsgType : std::uint8_t {
  kGetParams = 1,
  kParams = 2,
  kUploadHashes = 3,
  kDedupResult = 4,
  kUploadCt = 5,
  kExchangeOpen = 6,
  kSlshParamShare = 7,
  kPakeMsg = 8,
  kWrappedKey = 9,
  kFetchCt = 10,
  kCt = 11,
  kAbort = 12,
  kAck = 13,
  kHello = 14,
  kExchangeDone = 15,
};

enum class ReasonCode : std::uint8_t {
  kTimeout = 0,
  kBadToken = 1,
  kRateLimited = 2,
  kMalformed = 3,
  kAuthFailure = 4,
  kPeerAborted = 5,
  kQuotaExceeded = 6,
};

const char* to_string(ReasonCode reason);

enum class ExchangeRole : std::uint8_t { kUploader = 0, kHolder = 1 };

inline ExchangeRole other(ExchangeRole r) {
  return r == ExchangeRole::kUploader ? ExchangeRole::kHolder : ExchangeRole::kUploader;
}

struct GetParams {};

struct GenerationParams {
  GenerationId generation_id = 0;
  std::vector<LshParams> params;
};

struct Params {
  std::uint32_t pake_bits = 2048;
  std::vector<GenerationParams> generations;
};

struct UploadHashes {
  std::string user_id;
  std::string upload_ref;
  GenerationDigests digests;
};

struct DedupUnique {
  UploadToken upload_token{};
  ImageId image_ref = 0;
};

struct DedupDuplicate {
  ExchangeId exchange_id = 0;
  ExchangeRole peer_role_hint = ExchangeRole::kHolder;
  std::uint32_t collisions = 0;
  ImageId image_ref = 0;
};

struct DedupResult {
  std::variant<DedupUnique, DedupDuplicate> outcome;
};

struct UploadCt {
  UploadToken upload_token{};
  Bytes ciphertext;
};

struct ExchangeOpen {
  ExchangeId exchange_id = 0;
  ImageId image_ref = 0;
  ExchangeRole role = ExchangeRole::kHolder;
  std::uint32_t pake_bits = 2048;
  // Shape of the fresh parameter sets both sides contribute.
  std::uint32_t dim = 0;
  std::uint32_t bits = 0;
};

struct SlshParamShare {
  ExchangeId exchange_id = 0;
  ExchangeRole sender_role = ExchangeRole::kUploader;
  Seed seed{};
  std::uint32_t dim = 0;
  std::uint32_t bits = 0;
};

struct PakeMsg {
  ExchangeId exchange_id = 0;
  std::uint8_t session_index = 1;
  Bytes element;
};

struct WrappedKeyMsg {
  ExchangeId exchange_id = 0;
  Bytes wrapped;
};

struct FetchCt {
  ImageId image_ref = 0;
};

struct Ct {
  Bytes ciphertext;
};

struct Abort {
  ReasonCode reason = ReasonCode::kMalformed;
  ExchangeId exchange_id = 0;  // 0 when not exchange-scoped
};

struct Ack {
  std::uint64_t ref = 0;
};

// Binds a connection to a user id. `serving` marks a holder connection that
// answers key exchanges.
struct Hello {
  std::string user_id;
  bool serving = false;
};

struct ExchangeDone {
  ExchangeId exchange_id = 0;
};

using Message = std::variant<GetParams, Params, UploadHashes, DedupResult, UploadCt, ExchangeOpen,
                             SlshParamShare, PakeMsg, WrappedKeyMsg, FetchCt, Ct, Abort, Ack,
                             Hello, ExchangeDone>;

MsgType type_of(const Message& m);
const char* name_of(MsgType t);

// Exchange id for exchange-scoped messages, nullopt otherwise.
std::optional<ExchangeId> exchange_of(const Message& m);

// length (u32 BE, body only) || version || msg_type || body
Bytes encode_frame(const Message& m);
// Decodes exactly one frame. Throws Error(kProtocol).
Message decode_frame(ByteView frame);

// Incremental stream parser.
class FrameBuffer {
 public:
  void append(ByteView data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
  // Next complete frame, if buffered. Throws Error(kProtocol) on a bad header.
  std::optional<Message> next();
  std::size_t buffered() const { return buf_.size(); }

 private:
  Bytes buf_;
};

}  // namespace sdedup::proto
