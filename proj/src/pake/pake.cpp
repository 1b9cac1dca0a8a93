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

#include "sdedup/pake/pake.hpp"

#include <mutex>

#include "sdedup/common/hash.hpp"

namespace sdedup {
namespace {

constexpr std::string_view kPasswordTag = "PAKE-pw";
constexpr std::string_view kKeyTag = "SLSH-DEDUP-SPAKE2-KEY";

void check(int ok, const char* what) {
  if (ok != 1) throw Error(Errc::kBadGroup, what);
}

// Expands a label to element_size + 16 bytes, reduces mod p and squares,
// landing in the quadratic-residue subgroup. Retries on the identity.
BnPtr hash_to_group(const GroupParams& group, std::string_view label, BN_CTX* ctx) {
  const std::size_t want = group.element_size() + 16;
  for (std::uint32_t attempt = 0;; ++attempt) {
    Bytes wide;
    for (std::uint32_t block = 0; wide.size() < want; ++block) {
      auto d = Sha256()
                   .update(label)
                   .update_u32(static_cast<std::uint32_t>(group.bits()))
                   .update_u32(attempt)
                   .update_u32(block)
                   .finish();
      wide.insert(wide.end(), d.begin(), d.end());
    }
    wide.resize(want);
    auto x = bn_from_bytes(wide);
    auto r = bn_new();
    check(BN_mod(x.get(), x.get(), group.p(), ctx), "BN_mod");
    check(BN_mod_sqr(r.get(), x.get(), group.p(), ctx), "BN_mod_sqr");
    if (!BN_is_zero(r.get()) && !BN_is_one(r.get())) return r;
  }
}

}  // namespace

BnPtr bn_new() {
  BnPtr bn(BN_new());
  if (!bn) throw Error(Errc::kBadGroup, "BN_new failed");
  return bn;
}

BnPtr bn_from_bytes(ByteView big_endian) {
  BnPtr bn(BN_bin2bn(big_endian.data(), static_cast<int>(big_endian.size()), nullptr));
  if (!bn) throw Error(Errc::kBadGroup, "BN_bin2bn failed");
  return bn;
}

BnCtxPtr bn_ctx_new() {
  BnCtxPtr ctx(BN_CTX_new());
  if (!ctx) throw Error(Errc::kBadGroup, "BN_CTX_new failed");
  return ctx;
}

GroupParams::GroupParams(int bits) : bits_(bits) {
  p_ = bn_new();
  switch (bits) {
    case 1024: check(BN_get_rfc2409_prime_1024(p_.get()) != nullptr, "rfc2409"); break;
    case 2048: check(BN_get_rfc3526_prime_2048(p_.get()) != nullptr, "rfc3526"); break;
    case 4096: check(BN_get_rfc3526_prime_4096(p_.get()) != nullptr, "rfc3526"); break;
    case 8192: check(BN_get_rfc3526_prime_8192(p_.get()) != nullptr, "rfc3526"); break;
    default: throw Error(Errc::kBadGroup, "unsupported group size " + std::to_string(bits));
  }
  auto ctx = bn_ctx_new();
  q_ = bn_new();
  check(BN_rshift1(q_.get(), p_.get()), "q");
  g_ = bn_new();
  check(BN_set_word(g_.get(), 2), "g");
  mont_ = BN_MONT_CTX_new();
  if (mont_ == nullptr) throw Error(Errc::kBadGroup, "BN_MONT_CTX_new");
  check(BN_MONT_CTX_set(mont_, p_.get(), ctx.get()), "BN_MONT_CTX_set");
  m_ = hash_to_group(*this, "SLSH-DEDUP-M", ctx.get());
  n_ = hash_to_group(*this, "SLSH-DEDUP-N", ctx.get());
}

GroupParams::~GroupParams() { BN_MONT_CTX_free(mont_); }

int GroupParams::security_bits() const {
  switch (bits_) {
    case 1024: return 80;
    case 2048: return 112;
    case 4096: return 152;
    default: return 200;
  }
}

const GroupParams& GroupParams::get(int bits) {
  static std::once_flag flags[4];
  static std::unique_ptr<GroupParams> groups[4];
  int slot = -1;
  for (int i = 0; i < 4; ++i) {
    if (kSupportedBits[i] == bits) slot = i;
  }
  if (slot < 0) throw Error(Errc::kBadGroup, "unsupported group size " + std::to_string(bits));
  std::call_once(flags[slot], [&] { groups[slot].reset(new GroupParams(bits)); });
  return *groups[slot];
}

BnPtr GroupParams::pow(const BIGNUM* base, const BIGNUM* exponent, BN_CTX* ctx) const {
  auto r = bn_new();
  check(BN_mod_exp_mont_consttime(r.get(), base, exponent, p_.get(), ctx, mont_), "modexp");
  return r;
}

bool GroupParams::is_subgroup_element(const BIGNUM* e, BN_CTX* ctx) const {
  if (BN_is_negative(e) || BN_is_zero(e) || BN_is_one(e) || BN_cmp(e, p_.get()) >= 0) return false;
  return BN_kronecker(e, p_.get(), ctx) == 1;
}

Bytes GroupParams::encode_element(const BIGNUM* e) const {
  Bytes out(element_size());
  check(BN_bn2binpad(e, out.data(), static_cast<int>(out.size())) >= 0 ? 1 : 0, "bn2binpad");
  return out;
}

BnPtr GroupParams::decode_element(ByteView bytes, BN_CTX* ctx) const {
  if (bytes.size() != element_size()) throw Error(Errc::kInvalidElement, "wrong element length");
  auto e = bn_from_bytes(bytes);
  if (!is_subgroup_element(e.get(), ctx)) {
    throw Error(Errc::kInvalidElement, "element outside the prime-order subgroup");
  }
  return e;
}

bool validate_group(const GroupParams& group) {
  auto ctx = bn_ctx_new();
  if (BN_check_prime(group.p(), ctx.get(), nullptr) != 1) return false;
  if (BN_check_prime(group.q(), ctx.get(), nullptr) != 1) return false;
  for (const BIGNUM* e : {group.g(), group.m(), group.n()}) {
    if (BN_is_one(e)) return false;
    auto r = group.pow(e, group.q(), ctx.get());
    if (!BN_is_one(r.get())) return false;
  }
  return true;
}

BnPtr password_to_scalar(const GroupParams& group, ByteView password) {
  if (password.empty()) throw Error(Errc::kEmptyPassword, "password is empty");
  Bytes wide;
  for (std::uint32_t block = 0; block < 2; ++block) {
    auto d = Sha256().update(password).update(kPasswordTag).update_u32(block).finish();
    wide.insert(wide.end(), d.begin(), d.end());
  }
  auto w = bn_from_bytes(wide);
  auto ctx = bn_ctx_new();
  check(BN_nnmod(w.get(), w.get(), group.q(), ctx.get()), "BN_nnmod");
  return w;
}

SessionKey derive_session_key(const GroupParams& group, ByteView context, ByteView msg_a,
                              ByteView msg_b, const BIGNUM* password_scalar,
                              const BIGNUM* shared_element) {
  Bytes w(group.scalar_size());
  check(BN_bn2binpad(password_scalar, w.data(), static_cast<int>(w.size())) >= 0 ? 1 : 0, "w");
  auto k = group.encode_element(shared_element);
  return SessionKey(Sha256()
                        .update(kKeyTag)
                        .update_u32(static_cast<std::uint32_t>(context.size()))
                        .update(context)
                        .update(msg_a)
                        .update(msg_b)
                        .update(w)
                        .update(k)
                        .finish());
}

std::pair<PakeSession, Bytes> PakeSession::start(PakeRole role, const GroupParams& group,
                                                 ByteView password, ByteView context,
                                                 ExponentRange range) {
  auto w = password_to_scalar(group, password);
  return start_with_scalar(role, group, w.get(), context, nullptr, range);
}

std::pair<PakeSession, Bytes> PakeSession::start_with_scalar(PakeRole role,
                                                             const GroupParams& group,
                                                             const BIGNUM* password_scalar,
                                                             ByteView context,
                                                             const BIGNUM* ephemeral,
                                                             ExponentRange range) {
  auto ctx = bn_ctx_new();
  PakeSession s(role, group);
  s.password_scalar_.reset(BN_dup(password_scalar));
  s.context_.assign(context.begin(), context.end());
  s.ephemeral_ = bn_new();
  if (ephemeral != nullptr) {
    if (BN_is_zero(ephemeral) || BN_is_negative(ephemeral) || BN_cmp(ephemeral, group.q()) >= 0) {
      throw Error(Errc::kInvalidArgument, "ephemeral exponent outside [1, q-1]");
    }
    check(BN_copy(s.ephemeral_.get(), ephemeral) != nullptr, "BN_copy");
  } else {
    // Uniform in [1, bound] with bound = q - 1 or 2^N - 1.
    auto bound = bn_new();
    if (range == ExponentRange::kFull) {
      check(BN_sub(bound.get(), group.q(), BN_value_one()), "BN_sub");
    } else {
      check(BN_set_bit(bound.get(), 2 * group.security_bits()), "BN_set_bit");
      check(BN_sub(bound.get(), bound.get(), BN_value_one()), "BN_sub");
    }
    check(BN_priv_rand_range(s.ephemeral_.get(), bound.get()), "BN_priv_rand_range");
    check(BN_add(s.ephemeral_.get(), s.ephemeral_.get(), BN_value_one()), "BN_add");
  }
  BN_set_flags(s.ephemeral_.get(), BN_FLG_CONSTTIME);
  BN_set_flags(s.password_scalar_.get(), BN_FLG_CONSTTIME);

  const BIGNUM* blind = role == PakeRole::kA ? group.m() : group.n();
  auto gx = group.pow(group.g(), s.ephemeral_.get(), ctx.get());
  auto mw = group.pow(blind, s.password_scalar_.get(), ctx.get());
  auto msg = bn_new();
  check(BN_mod_mul(msg.get(), gx.get(), mw.get(), group.p(), ctx.get()), "BN_mod_mul");
  s.own_message_ = group.encode_element(msg.get());
  Bytes out = s.own_message_;
  return {std::move(s), std::move(out)};
}

SessionKey PakeSession::finish(ByteView peer_message) {
  if (consumed_) throw Error(Errc::kSessionConsumed, "PAKE session already finished");
  consumed_ = true;
  const GroupParams& group = *group_;
  auto ctx = bn_ctx_new();
  auto peer = group.decode_element(peer_message, ctx.get());

  // Peer blinded with the other constant: A unblinds with N, B with M.
  const BIGNUM* peer_blind = role_ == PakeRole::kA ? group.n() : group.m();
  auto blind_w = group.pow(peer_blind, password_scalar_.get(), ctx.get());
  auto inverse = bn_new();
  if (BN_mod_inverse(inverse.get(), blind_w.get(), group.p(), ctx.get()) == nullptr) {
    throw Error(Errc::kBadGroup, "BN_mod_inverse");
  }
  auto unblinded = bn_new();
  check(BN_mod_mul(unblinded.get(), peer.get(), inverse.get(), group.p(), ctx.get()), "mul");
  auto shared = group.pow(unblinded.get(), ephemeral_.get(), ctx.get());
  if (BN_is_one(shared.get())) throw Error(Errc::kInvalidElement, "degenerate shared element");

  const ByteView msg_a = role_ == PakeRole::kA ? ByteView(own_message_) : peer_message;
  const ByteView msg_b = role_ == PakeRole::kA ? peer_message : ByteView(own_message_);
  auto key = derive_session_key(group, context_, msg_a, msg_b, password_scalar_.get(), shared.get());
  ephemeral_.reset();
  password_scalar_.reset();
  return key;
}

}  // namespace sdedup
