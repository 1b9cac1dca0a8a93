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
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <unordered_map>

namespace sdedup::server {

using Clock = std::chrono::steady_clock;
using NowFn = std::function<Clock::time_point()>;

// Token bucket in fixed point: one token is 10^9 units, so refills of a
// fraction of a token accumulate exactly.
class TokenBucket {
 public:
  static constexpr std::uint64_t kUnit = 1'000'000'000;

  TokenBucket(double capacity, double rate_per_sec, Clock::time_point now);

  // Refills for the elapsed time, then takes `cost` tokens if available.
  bool try_take(Clock::time_point now, std::uint64_t cost = 1);
  // Current balance in tokens, after refilling.
  double tokens(Clock::time_point now);
  std::uint64_t units() const { return units_; }

 private:
  void refill(Clock::time_point now);

  std::uint64_t capacity_;  // units
  std::uint64_t rate_;      // units per second
  std::uint64_t units_;
  std::uint64_t carry_ = 0;  // sub-unit remainder, in units * ns
  Clock::time_point last_;
};

enum class RateDecision { kAllowed, kRateLimited };

// One bucket per user, created full on first sight. Linearizable.
class RateLimiter {
 public:
  RateLimiter(double burst, double rate_per_sec, NowFn now = {});

  RateDecision check_rate(const std::string& user_id, std::uint64_t cost = 1);
  double tokens(const std::string& user_id);

 private:
  double burst_, rate_;
  NowFn now_;
  std::mutex mu_;
  std::unordered_map<std::string, TokenBucket> buckets_;
};

}  // namespace sdedup::server
