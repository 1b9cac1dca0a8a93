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

#include "sdedup/slsh/slsh.hpp"

#include <cmath>
#include <numbers>

#include "sdedup/common/hash.hpp"

namespace sdedup {
namespace {

constexpr std::string_view kPlaneTag = "SLSH-PRNG-v1";
constexpr std::string_view kParamIdTag = "SLSH-PARAMID-v1";
constexpr std::string_view kDigestTag = "SLSH-v1";

ParamId derive_param_id(const Seed& seed, int dim, int bits) {
  auto full = Sha256()
                  .update(kParamIdTag)
                  .update(seed)
                  .update_u32(static_cast<std::uint32_t>(dim))
                  .update_u32(static_cast<std::uint32_t>(bits))
                  .finish();
  ParamId id{};
  std::copy_n(full.begin(), id.size(), id.begin());
  return id;
}

}  // namespace

SeededStream::SeededStream(const Seed& seed, std::string_view tag) : seed_(seed), tag_(tag) {}

std::uint64_t SeededStream::next_u64() {
  if (word_ == 4) {
    block_ = Sha256().update(tag_).update(seed_).update_u64(counter_++).finish();
    word_ = 0;
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = v << 8 | block_[static_cast<std::size_t>(word_ * 8 + i)];
  ++word_;
  return v;
}

double SeededStream::next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double SeededStream::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = next_unit();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

LshParams LshParams::generate(const Seed& seed, int dim, int bits) {
  if (dim < 2 || bits < kMinBits || bits > kMaxBits) {
    throw Error(Errc::kBadDimensions, "need dim >= 2 and 8 <= bits <= 64");
  }
  LshParams p;
  p.seed_ = seed;
  p.dim_ = dim;
  p.bits_ = bits;
  p.id_ = derive_param_id(seed, dim, bits);
  auto planes = std::make_shared<std::vector<double>>(static_cast<std::size_t>(dim) * bits);
  SeededStream stream(seed, kPlaneTag);
  for (auto& x : *planes) x = stream.next_gaussian();
  for (int j = 0; j < bits; ++j) {
    bool nonzero = false;
    for (std::size_t i = 0; i < static_cast<std::size_t>(dim); ++i) {
      nonzero |= (*planes)[static_cast<std::size_t>(j) * dim + i] != 0.0;
    }
    if (!nonzero) throw Error(Errc::kBadDimensions, "degenerate plane");
  }
  p.planes_ = std::move(planes);
  return p;
}

void LshParams::encode_to(ByteWriter& w) const {
  w.raw(id_);
  w.u32(static_cast<std::uint32_t>(dim_));
  w.u32(static_cast<std::uint32_t>(bits_));
  w.raw(seed_);
}

Bytes LshParams::encode() const {
  ByteWriter w;
  encode_to(w);
  return std::move(w).take();
}

LshParams LshParams::decode(ByteReader& r) {
  auto id = r.fixed<16>();
  auto dim = r.u32();
  auto bits = r.u32();
  auto seed = r.fixed<32>();
  if (dim > (1u << 20) || bits > static_cast<std::uint32_t>(kMaxBits)) {
    throw Error(Errc::kBadDimensions, "params out of range");
  }
  auto p = generate(seed, static_cast<int>(dim), static_cast<int>(bits));
  if (!ct_equal(p.id_, id)) throw Error(Errc::kProtocol, "param_id does not match seed");
  return p;
}

LshBits LshBits::complement() const {
  const std::uint64_t mask = count_ == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << count_) - 1;
  return LshBits(~word_ & mask, count_);
}

Bytes LshBits::packed() const {
  Bytes out(static_cast<std::size_t>((count_ + 7) / 8), 0);
  for (int j = 0; j < count_; ++j) {
    if ((*this)[j]) out[static_cast<std::size_t>(j / 8)] |= static_cast<std::uint8_t>(0x80u >> (j % 8));
  }
  return out;
}

LshBits lsh(const LshParams& params, const FeatureVector& v) {
  if (static_cast<int>(v.dim()) != params.dim()) {
    throw Error(Errc::kDimMismatch, "feature dim does not match params");
  }
  std::uint64_t word = 0;
  const auto values = v.values();
  for (int j = 0; j < params.bits(); ++j) {
    const auto plane = params.plane(j);
    double dot = 0;
    for (std::size_t i = 0; i < plane.size(); ++i) dot += plane[i] * values[i];
    if (dot >= 0) word |= std::uint64_t{1} << j;
  }
  return LshBits(word, params.bits());
}

SlshDigest slsh_of_bits(const LshParams& params, const LshBits& bits) {
  return SlshDigest(Sha256().update(kDigestTag).update(params.id()).update(bits.packed()).finish());
}

SlshDigest slsh(const LshParams& params, const FeatureVector& v) {
  return slsh_of_bits(params, lsh(params, v));
}

}  // namespace sdedup
