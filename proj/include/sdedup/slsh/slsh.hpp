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
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "sdedup/common/bytes.hpp"
#include "sdedup/features/features.hpp"

namespace sdedup {

using Seed = std::array<std::uint8_t, 32>;
using ParamId = std::array<std::uint8_t, 16>;

// Portable counter-mode SHA-256 stream: block i = SHA256(tag || seed || u64be(i)),
// each block yielding four big-endian 64-bit words. Gaussians come from
// Box-Muller over pairs of words, both outputs used.
class SeededStream {
 public:
  SeededStream(const Seed& seed, std::string_view tag);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of precision.
  double next_unit();
  double next_gaussian();

 private:
  Seed seed_;
  std::string tag_;
  std::uint64_t counter_ = 0;
  Digest32 block_{};
  int word_ = 4;
  bool has_spare_ = false;
  double spare_ = 0;
};

// Random-hyperplane LSH parameters. Planes are a pure function of
// (seed, dim, bits) so only the seed travels on the wire.
class LshParams {
 public:
  static constexpr std::size_t kWireSize = 16 + 4 + 4 + 32;
  static constexpr int kMinBits = 8;
  static constexpr int kMaxBits = 64;

  // Throws Error(kBadDimensions) unless dim >= 2 and 8 <= bits <= 64.
  static LshParams generate(const Seed& seed, int dim, int bits);

  const ParamId& id() const { return id_; }
  const Seed& seed() const { return seed_; }
  int dim() const { return dim_; }
  int bits() const { return bits_; }
  std::span<const double> plane(int j) const {
    return std::span(*planes_).subspan(static_cast<std::size_t>(j) * dim_, dim_);
  }
  std::span<const double> matrix() const { return *planes_; }

  // param_id || dim (u32) || bits (u32) || seed
  Bytes encode() const;
  void encode_to(ByteWriter& w) const;
  // Regenerates planes from the seed; rejects an id that does not match.
  static LshParams decode(ByteReader& r);

 private:
  LshParams() = default;

  ParamId id_{};
  Seed seed_{};
  int dim_ = 0;
  int bits_ = 0;
  std::shared_ptr<const std::vector<double>> planes_;
};

inline LshParams gen_params(const Seed& seed, int dim, int bits) {
  return LshParams::generate(seed, dim, bits);
}

// Sign pattern; bit j is plane_j . v >= 0.
class LshBits {
 public:
  LshBits(std::uint64_t word, int count) : word_(word), count_(count) {}

  int size() const { return count_; }
  bool operator[](int j) const { return (word_ >> j) & 1u; }
  std::uint64_t word() const { return word_; }
  LshBits complement() const;
  // Bit 0 first, MSB-first within bytes, zero-padded to whole bytes.
  Bytes packed() const;

  friend bool operator==(const LshBits&, const LshBits&) = default;

 private:
  std::uint64_t word_;
  int count_;
};

class SlshDigest {
 public:
  SlshDigest() = default;
  explicit SlshDigest(const Digest32& bytes) : bytes_(bytes) {}

  const Digest32& bytes() const { return bytes_; }
  std::string hex() const { return to_hex(bytes_); }

  // Constant time.
  friend bool operator==(const SlshDigest& a, const SlshDigest& b) {
    return ct_equal(a.bytes_, b.bytes_);
  }
  friend bool operator<(const SlshDigest& a, const SlshDigest& b) { return a.bytes_ < b.bytes_; }

 private:
  Digest32 bytes_{};
};

struct SlshDigestHash {
  std::size_t operator()(const SlshDigest& d) const noexcept {
    std::size_t h = 0;
    for (int i = 0; i < 8; ++i) h = h << 8 | d.bytes()[i];
    return h;
  }
};

// Throws kDimMismatch when v.dim() != params.dim().
LshBits lsh(const LshParams& params, const FeatureVector& v);
// SHA256("SLSH-v1" || param_id || packed bits)
SlshDigest slsh_of_bits(const LshParams& params, const LshBits& bits);
SlshDigest slsh(const LshParams& params, const FeatureVector& v);

}  // namespace sdedup
