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

#include "sdedup/server/rate_limit.hpp"

#include <cmath>

#include "sdedup/common/error.hpp"

namespace sdedup::server {
namespace {

std::uint64_t to_units(double tokens) {
  if (!(tokens >= 0) || tokens > 1e9) throw Error(Errc::kInvalidArgument, "bad bucket setting");
  return static_cast<std::uint64_t>(std::llround(tokens * TokenBucket::kUnit));
}

}  // namespace

TokenBucket::TokenBucket(double capacity, double rate_per_sec, Clock::time_point now)
    : capacity_(to_units(capacity)), rate_(to_units(rate_per_sec)), units_(capacity_), last_(now) {}

void TokenBucket::refill(Clock::time_point now) {
  if (now <= last_) return;
  auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(now - last_).count();
  last_ = now;
  // units gained = ns * rate / 1e9, with the remainder carried forward.
  unsigned __int128 acc = static_cast<unsigned __int128>(ns) * rate_ + carry_;
  auto gained = acc / 1'000'000'000u;
  carry_ = static_cast<std::uint64_t>(acc % 1'000'000'000u);
  if (gained >= capacity_ - units_) {
    units_ = capacity_;
    carry_ = 0;
  } else {
    units_ += static_cast<std::uint64_t>(gained);
  }
}

bool TokenBucket::try_take(Clock::time_point now, std::uint64_t cost) {
  refill(now);
  const std::uint64_t need = cost * kUnit;
  if (units_ < need) return false;
  units_ -= need;
  return true;
}

double TokenBucket::tokens(Clock::time_point now) {
  refill(now);
  return static_cast<double>(units_) / kUnit;
}

RateLimiter::RateLimiter(double burst, double rate_per_sec, NowFn now)
    : burst_(burst), rate_(rate_per_sec), now_(now ? std::move(now) : NowFn(Clock::now)) {
  TokenBucket probe(burst_, rate_, Clock::time_point{});  // validates the settings
}

RateDecision RateLimiter::check_rate(const std::string& user_id, std::uint64_t cost) {
  std::lock_guard lock(mu_);
  auto now = now_();
  auto it = buckets_.try_emplace(user_id, burst_, rate_, now).first;
  return it->second.try_take(now, cost) ? RateDecision::kAllowed : RateDecision::kRateLimited;
}

double RateLimiter::tokens(const std::string& user_id) {
  std::lock_guard lock(mu_);
  auto now = now_();
  return buckets_.try_emplace(user_id, burst_, rate_, now).first->second.tokens(now);
}

}  // namespace sdedup::server
