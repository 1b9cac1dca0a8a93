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

#include <openssl/bn.h>

#include <array>
#include <cstdint>
#include <memory>
#include <utility>

#include "sdedup/common/bytes.hpp"

namespace sdedup {

struct BnDeleter {
  void operator()(BIGNUM* bn) const { BN_clear_free(bn); }
};
using BnPtr = std::unique_ptr<BIGNUM, BnDeleter>;

struct BnCtxDeleter {
  void operator()(BN_CTX* ctx) const { BN_CTX_free(ctx); }
};
using BnCtxPtr = std::unique_ptr<BN_CTX, BnCtxDeleter>;

BnPtr bn_new();
BnPtr bn_from_bytes(ByteView big_endian);
BnCtxPtr bn_ctx_new();

// Safe-prime group p = 2q + 1 restricted to its order-q subgroup of
// quadratic residues. The moduli are the RFC 2409 (1024) and RFC 3526
// (2048/4096/8192) MODP primes; g = 2 generates the subgroup for all of
// them. M and N are hashed into the subgroup from fixed labels.
class GroupParams {
 public:
  static constexpr int kSupportedBits[] = {1024, 2048, 4096, 8192};

  // Throws Error(kBadGroup) for unsupported sizes.
  static const GroupParams& get(int bits);

  GroupParams(const GroupParams&) = delete;
  GroupParams& operator=(const GroupParams&) = delete;
  ~GroupParams();

  int bits() const { return bits_; }
  std::size_t element_size() const { return static_cast<std::size_t>(bits_ + 7) / 8; }
  std::size_t scalar_size() const { return static_cast<std::size_t>(BN_num_bytes(q_.get())); }
  // Estimated security strength in bits (80/112/152/200).
  int security_bits() const;

  const BIGNUM* p() const { return p_.get(); }
  const BIGNUM* q() const { return q_.get(); }
  const BIGNUM* g() const { return g_.get(); }
  const BIGNUM* m() const { return m_.get(); }
  const BIGNUM* n() const { return n_.get(); }

  // base^exponent mod p in constant time with respect to the exponent.
  BnPtr pow(const BIGNUM* base, const BIGNUM* exponent, BN_CTX* ctx) const;

  // Nontrivial member of the order-q subgroup: 1 < e < p and (e | p) = 1.
  // For a safe prime the Legendre symbol test is equivalent to e^q == 1.
  bool is_subgroup_element(const BIGNUM* e, BN_CTX* ctx) const;

  // Fixed-width big-endian encoding of element_size() bytes.
  Bytes encode_element(const BIGNUM* e) const;
  // Throws Error(kInvalidElement) on wrong length, out of range, identity,
  // or non-membership.
  BnPtr decode_element(ByteView bytes, BN_CTX* ctx) const;

 private:
  explicit GroupParams(int bits);

  int bits_;
  BnPtr p_, q_, g_, m_, n_;
  BN_MONT_CTX* mont_ = nullptr;
};

// Full probabilistic check of the invariants: p and q prime, and g, M, N of
// order q. Slow for 8192 bits (tens of seconds).
bool validate_group(const GroupParams& group);

// SHA-256 expansion of (pw || "PAKE-pw") to 512 bits, reduced mod q.
// Throws Error(kEmptyPassword).
BnPtr password_to_scalar(const GroupParams& group, ByteView password);

class SessionKey {
 public:
  static constexpr std::size_t kSize = 32;

  explicit SessionKey(const Digest32& bytes) : bytes_(bytes) {}
  const Digest32& bytes() const { return bytes_; }

  friend bool operator==(const SessionKey& a, const SessionKey& b) {
    return ct_equal(a.bytes_, b.bytes_);
  }

 private:
  Digest32 bytes_;
};

enum class PakeRole : std::uint8_t { kA = 0, kB = 1 };

// Range of the ephemeral exponent. kStandard draws from [1, 2^N - 1] with N
// twice the group's security strength (SP 800-56A key-pair generation for
// safe-prime groups); kFull draws from [1, q - 1].
enum class ExponentRange { kStandard, kFull };

// H(len(context) || context || X || Y || w || K), every group value at fixed
// width. X is always role A's message.
SessionKey derive_session_key(const GroupParams& group, ByteView context, ByteView msg_a,
                              ByteView msg_b, const BIGNUM* password_scalar,
                              const BIGNUM* shared_element);

// One SPAKE2 run. Role A sends X = g^x M^w, role B sends Y = g^y N^w.
// Single-use: finish() may be called once.
class PakeSession {
 public:
  // Returns the session and the message to send to the peer.
  static std::pair<PakeSession, Bytes> start(PakeRole role, const GroupParams& group,
                                             ByteView password, ByteView context,
                                             ExponentRange range = ExponentRange::kStandard);
  // Lower-level entry: explicit password scalar and, optionally, a fixed
  // ephemeral exponent (tests only; must lie in [1, q-1]).
  static std::pair<PakeSession, Bytes> start_with_scalar(PakeRole role, const GroupParams& group,
                                                         const BIGNUM* password_scalar,
                                                         ByteView context,
                                                         const BIGNUM* ephemeral = nullptr,
                                                         ExponentRange range = ExponentRange::kStandard);

  PakeSession(PakeSession&&) noexcept = default;
  PakeSession& operator=(PakeSession&&) noexcept = default;

  PakeRole role() const { return role_; }
  const Bytes& own_message() const { return own_message_; }
  bool consumed() const { return consumed_; }

  // Throws Error(kInvalidElement) for a bad peer element and
  // Error(kSessionConsumed) on reuse.
  SessionKey finish(ByteView peer_message);

 private:
  PakeSession(PakeRole role, const GroupParams& group) : role_(role), group_(&group) {}

  PakeRole role_;
  const GroupParams* group_;
  BnPtr password_scalar_;
  BnPtr ephemeral_;
  Bytes own_message_;
  Bytes context_;
  bool consumed_ = false;
};

}  // namespace sdedup
