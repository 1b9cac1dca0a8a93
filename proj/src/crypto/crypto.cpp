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

#include "sdedup/crypto/crypto.hpp"

#include <openssl/evp.h>

#include <memory>

#include "sdedup/common/hash.hpp"

namespace sdedup {
namespace {

constexpr std::string_view kImageAad = "sdedup-image-v1";
constexpr std::string_view kWrapAad = "sdedup-wrap-v1";
constexpr std::string_view kKekTag = "sdedup-kek-v1";

struct CtxDeleter {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

CipherCtx new_ctx() {
  CipherCtx c(EVP_CIPHER_CTX_new());
  if (!c) throw Error(Errc::kIo, "EVP_CIPHER_CTX_new");
  return c;
}

}  // namespace

Bytes Ciphertext::encode() const {
  Bytes out;
  out.reserve(kOverhead + body.size());
  out.insert(out.end(), nonce.begin(), nonce.end());
  out.insert(out.end(), body.begin(), body.end());
  out.insert(out.end(), tag.begin(), tag.end());
  return out;
}

Ciphertext Ciphertext::decode(ByteView bytes) {
  if (bytes.size() < kOverhead) throw Error(Errc::kProtocol, "ciphertext shorter than nonce+tag");
  Ciphertext c;
  std::copy_n(bytes.begin(), kNonceSize, c.nonce.begin());
  c.body.assign(bytes.begin() + kNonceSize, bytes.end() - kTagSize);
  std::copy(bytes.end() - kTagSize, bytes.end(), c.tag.begin());
  return c;
}

namespace aead {

Ciphertext seal(ByteView key, ByteView plaintext, ByteView aad) {
  if (key.size() != 32) throw Error(Errc::kInvalidArgument, "AES-256 key must be 32 bytes");
  Ciphertext c;
  secure_random(c.nonce);
  c.body.resize(plaintext.size());
  auto ctx = new_ctx();
  int len = 0;
  bool ok = EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(), c.nonce.data()) == 1;
  if (ok && !aad.empty()) ok = EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) == 1;
  if (ok && !plaintext.empty()) {
    ok = EVP_EncryptUpdate(ctx.get(), c.body.data(), &len, plaintext.data(),
                           static_cast<int>(plaintext.size())) == 1;
  }
  if (ok) ok = EVP_EncryptFinal_ex(ctx.get(), c.body.data() + c.body.size(), &len) == 1;
  if (ok) {
    ok = EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, static_cast<int>(c.tag.size()),
                             c.tag.data()) == 1;
  }
  if (!ok) throw Error(Errc::kIo, "AES-GCM encryption failed");
  return c;
}

Bytes open(ByteView key, const Ciphertext& c, ByteView aad) {
  if (key.size() != 32) throw Error(Errc::kInvalidArgument, "AES-256 key must be 32 bytes");
  Bytes plain(c.body.size());
  auto ctx = new_ctx();
  int len = 0;
  bool ok = EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(), c.nonce.data()) == 1;
  if (ok && !aad.empty()) ok = EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) == 1;
  if (ok && !c.body.empty()) {
    ok = EVP_DecryptUpdate(ctx.get(), plain.data(), &len, c.body.data(),
                           static_cast<int>(c.body.size())) == 1;
  }
  if (ok) {
    auto tag = c.tag;
    ok = EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, static_cast<int>(tag.size()),
                             tag.data()) == 1;
  }
  if (ok) ok = EVP_DecryptFinal_ex(ctx.get(), plain.data() + plain.size(), &len) == 1;
  if (!ok) {
    OPENSSL_cleanse(plain.data(), plain.size());
    throw Error(Errc::kAuthFailure, "authentication tag mismatch");
  }
  return plain;
}

}  // namespace aead

ImageKey gen_key() { return ImageKey(random_array<32>()); }

Ciphertext encrypt_image(const ImageKey& key, ByteView plaintext) {
  return aead::seal(key.bytes(), plaintext, as_bytes(kImageAad));
}

Bytes decrypt_image(const ImageKey& key, const Ciphertext& ciphertext) {
  return aead::open(key.bytes(), ciphertext, as_bytes(kImageAad));
}

Kek derive_kek(const SessionKey& first, const SessionKey& second, ByteView context) {
  return Kek(Sha256()
                 .update(kKekTag)
                 .update_u32(static_cast<std::uint32_t>(context.size()))
                 .update(context)
                 .update(first.bytes())
                 .update(second.bytes())
                 .finish());
}

WrappedKey wrap_key(const Kek& kek, const ImageKey& key) {
  return WrappedKey{aead::seal(kek.bytes(), key.bytes(), as_bytes(kWrapAad))};
}

ImageKey unwrap_key(const Kek& kek, const WrappedKey& wrapped) {
  if (wrapped.ciphertext.body.size() != ImageKey::kSize) {
    throw Error(Errc::kAuthFailure, "wrapped key has wrong length");
  }
  auto plain = aead::open(kek.bytes(), wrapped.ciphertext, as_bytes(kWrapAad));
  auto key = ImageKey::from_bytes(plain);
  OPENSSL_cleanse(plain.data(), plain.size());
  return key;
}

}  // namespace sdedup
