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

#include "sdedup/common/bytes.hpp"
#include "sdedup/pake/pake.hpp"

namespace sdedup {

// 256-bit symmetric key; the tag keeps image keys and KEKs apart.
template <class Tag>
class Key256 {
 public:
  static constexpr std::size_t kSize = 32;

  Key256() = default;
  explicit Key256(const Digest32& bytes) : bytes_(bytes) {}
  static Key256 from_bytes(ByteView b) {
    if (b.size() != kSize) throw Error(Errc::kInvalidArgument, "key must be 32 bytes");
    Digest32 d{};
    std::copy(b.begin(), b.end(), d.begin());
    return Key256(d);
  }

  const Digest32& bytes() const { return bytes_; }

  friend bool operator==(const Key256& a, const Key256& b) { return ct_equal(a.bytes_, b.bytes_); }

 private:
  Digest32 bytes_{};
};

using ImageKey = Key256<struct ImageKeyTag>;
using Kek = Key256<struct KekTag>;

// AES-256-GCM output. Encoded as nonce || body || tag.
struct Ciphertext {
  static constexpr std::size_t kNonceSize = 12;
  static constexpr std::size_t kTagSize = 16;
  static constexpr std::size_t kOverhead = kNonceSize + kTagSize;

  std::array<std::uint8_t, kNonceSize> nonce{};
  Bytes body;
  std::array<std::uint8_t, kTagSize> tag{};

  Bytes encode() const;
  // Throws Error(kProtocol) when shorter than the fixed overhead.
  static Ciphertext decode(ByteView bytes);
};

struct WrappedKey {
  static constexpr std::size_t kEncodedSize = ImageKey::kSize + Ciphertext::kOverhead;
  Ciphertext ciphertext;
};

// Throws Error(kEntropyUnavailable).
ImageKey gen_key();

Ciphertext encrypt_image(const ImageKey& key, ByteView plaintext);
// Throws Error(kAuthFailure) on tampering or a wrong key.
Bytes decrypt_image(const ImageKey& key, const Ciphertext& ciphertext);

// H(len(context) || context || k_first || k_second)
Kek derive_kek(const SessionKey& first, const SessionKey& second, ByteView context);

WrappedKey wrap_key(const Kek& kek, const ImageKey& key);
// Throws Error(kAuthFailure).
ImageKey unwrap_key(const Kek& kek, const WrappedKey& wrapped);

namespace aead {
Ciphertext seal(ByteView key, ByteView plaintext, ByteView aad);
Bytes open(ByteView key, const Ciphertext& ciphertext, ByteView aad);
}  // namespace aead

}  // namespace sdedup
