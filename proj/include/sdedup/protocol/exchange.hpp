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
#include <optional>
#include <variant>

#include "sdedup/crypto/crypto.hpp"
#include "sdedup/pake/pake.hpp"
#include "sdedup/protocol/transport.hpp"

namespace sdedup::proto {

enum class Phase : std::uint8_t {
  kOpened,
  kParamsShared,
  kPake1,
  kPake2,
  kKeyWrapped,
  kDone,
  kAborted,
};

const char* to_string(Phase p);

inline constexpr std::chrono::milliseconds kDefaultPhaseTimeout{30000};

// Phase tracker for one access-control exchange. Transitions only move
// forward and every transition re-arms the phase deadline.
class ExchangeState {
 public:
  ExchangeState(ExchangeId id, Clock::duration phase_timeout = kDefaultPhaseTimeout,
                Clock::time_point now = Clock::now())
      : id_(id), timeout_(phase_timeout), deadline_(now + phase_timeout) {}

  ExchangeId id() const { return id_; }
  Phase phase() const { return phase_; }
  Clock::time_point deadline() const { return deadline_; }
  bool terminal() const { return phase_ == Phase::kDone || phase_ == Phase::kAborted; }
  bool expired(Clock::time_point now) const { return !terminal() && now >= deadline_; }
  std::optional<ReasonCode> abort_reason() const { return reason_; }

  // Throws Error(kProtocol) unless `to` lies strictly ahead. Aborting goes
  // through abort().
  void advance(Phase to, Clock::time_point now = Clock::now());
  // No effect once terminal.
  void abort(ReasonCode reason);

 private:
  ExchangeId id_;
  Clock::duration timeout_;
  Clock::time_point deadline_;
  Phase phase_ = Phase::kOpened;
  std::optional<ReasonCode> reason_;
};

// Message plumbing for one exchange. `receive` yields only messages that
// carry this exchange's id and returns nullopt at the deadline.
struct ExchangeIo {
  std::function<void(const Message&)> send;
  std::function<std::optional<Message>(Clock::time_point)> receive;
};

struct ExchangeSettings {
  std::chrono::milliseconds phase_timeout = kDefaultPhaseTimeout;
  ExponentRange exponent_range = ExponentRange::kStandard;
};

struct Aborted {
  ReasonCode reason = ReasonCode::kMalformed;
};

// Both sides: share a fresh seed, derive digests of `own` under the
// uploader's and the holder's parameters, run the two PAKE sessions
// (uploader is role A) and derive the KEK. On failure the peer has already
// been told with an ABORT where that makes sense.
std::variant<Kek, Aborted> run_key_agreement(ExchangeRole role, const ExchangeOpen& open,
                                             const FeatureVector& own, ExchangeIo& io,
                                             ExchangeState& state,
                                             const ExchangeSettings& settings = {});

struct KeyOffered {};

// Holder side of Fig. 3 access control: agree on a KEK and send the image
// key wrapped under it.
std::variant<KeyOffered, Aborted> holder_serve(const ExchangeOpen& open, const ImageKey& key,
                                               const FeatureVector& own, ExchangeIo& io,
                                               const ExchangeSettings& settings = {});

}  // namespace sdedup::proto
