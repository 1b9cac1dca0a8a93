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

#include "sdedup/common/hash.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

namespace sdedup {

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (ctx_ == nullptr ||
      EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::kIo, "sha256 init failed");
  }
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

Sha256& Sha256::update(ByteView data) {
  if (!data.empty()) EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(), data.size());
  return *this;
}

Sha256& Sha256::update_u32(std::uint32_t v) {
  std::uint8_t b[4] = {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                       static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
  return update(ByteView(b, 4));
}

Sha256& Sha256::update_u64(std::uint64_t v) {
  update_u32(static_cast<std::uint32_t>(v >> 32));
  return update_u32(static_cast<std::uint32_t>(v));
}

Digest32 Sha256::finish() {
  Digest32 out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out.data(), &len);
  return out;
}

Digest32 sha256(ByteView data) { return Sha256().update(data).finish(); }

void secure_random(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_priv_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw Error(Errc::kEntropyUnavailable, "RAND_priv_bytes failed");
  }
}

}  // namespace sdedup
