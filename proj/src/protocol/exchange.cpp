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

#include "sdedup/protocol/exchange.hpp"

#include "sdedup/common/hash.hpp"

namespace sdedup::proto {
namespace {

constexpr std::string_view kSessionLabel = "sdedup-exchange-v1";
constexpr std::string_view kKekLabel = "sdedup-exchange-kek-v1";

Bytes context(std::string_view label, ExchangeId id, const Seed& uploader_seed,
              const Seed& holder_seed, std::uint8_t session) {
  ByteWriter w;
  w.raw(label);
  w.u64(id);
  w.raw(uploader_seed);
  w.raw(holder_seed);
  w.u8(session);
  return std::move(w).take();
}

Aborted fail(ExchangeIo& io, ExchangeState& state, ReasonCode reason, bool notify = true) {
  state.abort(reason);
  if (notify) {
    try {
      io.send(Abort{reason, state.id()});
    } catch (const Error&) {
      // Transport already gone; the server times the exchange out.
    }
  }
  return Aborted{reason};
}

// Waits for the next message of type T. A peer ABORT, a stray message or
// the deadline all end the exchange.
template <class T>
std::variant<T, Aborted> expect(ExchangeIo& io, ExchangeState& state) {
  std::optional<Message> m;
  try {
    m = io.receive(state.deadline());
  } catch (const Error&) {
    return fail(io, state, ReasonCode::kPeerAborted, false);
  }
  if (!m) return fail(io, state, ReasonCode::kTimeout);
  if (auto* a = std::get_if<Abort>(&*m)) {
    state.abort(ReasonCode::kPeerAborted);
    return Aborted{a->reason == ReasonCode::kTimeout ? ReasonCode::kTimeout
                                                     : ReasonCode::kPeerAborted};
  }
  if (auto* t = std::get_if<T>(&*m)) return std::move(*t);
  return fail(io, state, ReasonCode::kMalformed);
}

}  // namespace

const char* to_string(Phase p) {
  switch (p) {
    case Phase::kOpened: return "Opened";
    case Phase::kParamsShared: return "ParamsShared";
    case Phase::kPake1: return "Pake1";
    case Phase::kPake2: return "Pake2";
    case Phase::kKeyWrapped: return "KeyWrapped";
    case Phase::kDone: return "Done";
    case Phase::kAborted: return "Aborted";
  }
  return "?";
}

void ExchangeState::advance(Phase to, Clock::time_point now) {
  if (to == Phase::kAborted || terminal() || to <= phase_) {
    throw Error(Errc::kProtocol, std::string("illegal exchange transition ") + to_string(phase_) +
                                     " -> " + to_string(to));
  }
  phase_ = to;
  deadline_ = now + timeout_;
}

void ExchangeState::abort(ReasonCode reason) {
  if (terminal()) return;
  phase_ = Phase::kAborted;
  reason_ = reason;
}

std::variant<Kek, Aborted> run_key_agreement(ExchangeRole role, const ExchangeOpen& open,
                                             const FeatureVector& own, ExchangeIo& io,
                                             ExchangeState& state,
                                             const ExchangeSettings& settings) {
  const GroupParams* group = nullptr;
  try {
    group = &GroupParams::get(static_cast<int>(open.pake_bits));
  } catch (const Error&) {
    return fail(io, state, ReasonCode::kMalformed);
  }
  if (open.dim != own.dim() || open.bits < LshParams::kMinBits ||
      open.bits > LshParams::kMaxBits) {
    return fail(io, state, ReasonCode::kMalformed);
  }

  SlshParamShare mine{open.exchange_id, role, random_array<32>(), open.dim, open.bits};
  try {
    io.send(mine);
  } catch (const Error&) {
    return fail(io, state, ReasonCode::kPeerAborted, false);
  }

  auto share = expect<SlshParamShare>(io, state);
  if (auto* a = std::get_if<Aborted>(&share)) return *a;
  const auto& theirs = std::get<SlshParamShare>(share);
  if (theirs.sender_role != other(role) || theirs.dim != open.dim || theirs.bits != open.bits) {
    return fail(io, state, ReasonCode::kMalformed);
  }
  state.advance(Phase::kParamsShared);

  const Seed& seed_i = role == ExchangeRole::kUploader ? mine.seed : theirs.seed;
  const Seed& seed_j = role == ExchangeRole::kUploader ? theirs.seed : mine.seed;
  const int dim = static_cast<int>(open.dim), bits = static_cast<int>(open.bits);
  const SlshDigest passwords[2] = {slsh(LshParams::generate(seed_i, dim, bits), own),
                                   slsh(LshParams::generate(seed_j, dim, bits), own)};
  const PakeRole pake_role = role == ExchangeRole::kUploader ? PakeRole::kA : PakeRole::kB;

  std::optional<SessionKey> keys[2];
  for (std::uint8_t s = 1; s <= 2; ++s) {
    auto ctx = context(kSessionLabel, open.exchange_id, seed_i, seed_j, s);
    auto [session, msg] = PakeSession::start(pake_role, *group, passwords[s - 1].bytes(), ctx,
                                             settings.exponent_range);
    try {
      io.send(PakeMsg{open.exchange_id, s, std::move(msg)});
    } catch (const Error&) {
      return fail(io, state, ReasonCode::kPeerAborted, false);
    }
    auto reply = expect<PakeMsg>(io, state);
    if (auto* a = std::get_if<Aborted>(&reply)) return *a;
    const auto& peer = std::get<PakeMsg>(reply);
    if (peer.session_index != s) return fail(io, state, ReasonCode::kMalformed);
    try {
      keys[s - 1] = session.finish(peer.element);
    } catch (const Error&) {
      return fail(io, state, ReasonCode::kMalformed);
    }
    state.advance(s == 1 ? Phase::kPake1 : Phase::kPake2);
  }

  auto kek_ctx = context(kKekLabel, open.exchange_id, seed_i, seed_j, 0);
  return derive_kek(*keys[0], *keys[1], kek_ctx);
}

std::variant<KeyOffered, Aborted> holder_serve(const ExchangeOpen& open, const ImageKey& key,
                                               const FeatureVector& own, ExchangeIo& io,
                                               const ExchangeSettings& settings) {
  ExchangeState state(open.exchange_id, settings.phase_timeout);
  auto agreed = run_key_agreement(ExchangeRole::kHolder, open, own, io, state, settings);
  if (auto* a = std::get_if<Aborted>(&agreed)) return *a;
  auto wrapped = wrap_key(std::get<Kek>(agreed), key);
  try {
    io.send(WrappedKeyMsg{open.exchange_id, wrapped.ciphertext.encode()});
  } catch (const Error&) {
    return fail(io, state, ReasonCode::kPeerAborted, false);
  }
  state.advance(Phase::kKeyWrapped);
  state.advance(Phase::kDone);
  return KeyOffered{};
}

}  // namespace sdedup::proto
