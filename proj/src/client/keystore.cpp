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

#include "sdedup/client/keystore.hpp"

#include <openssl/evp.h>

#include <json.hpp>

#include "sdedup/common/hash.hpp"
#include "sdedup/features/image.hpp"
#include "sdedup/common/file_io.hpp"

namespace sdedup::client {
namespace {

constexpr std::string_view kMagic = "SDKS0001";
constexpr std::size_t kSaltSize = 16;
constexpr std::size_t kHeaderSize = 8 + 4 + kSaltSize;

Digest32 stretch(const std::string& passphrase, ByteView salt, std::uint32_t iterations) {
  Digest32 key{};
  if (PKCS5_PBKDF2_HMAC(passphrase.data(), static_cast<int>(passphrase.size()), salt.data(),
                        static_cast<int>(salt.size()), static_cast<int>(iterations), EVP_sha256(),
                        static_cast<int>(key.size()), key.data()) != 1) {
    throw Error(Errc::kInvalidArgument, "key derivation failed");
  }
  return key;
}

}  // namespace

Keystore::Keystore(Keystore&& other) noexcept
    : path_(std::move(other.path_)),
      passphrase_(std::move(other.passphrase_)),
      iterations_(other.iterations_),
      user_id_(std::move(other.user_id_)),
      records_(std::move(other.records_)) {}

Keystore Keystore::create(std::filesystem::path path, std::string passphrase,
                          std::uint32_t iterations) {
  if (passphrase.empty()) throw Error(Errc::kInvalidArgument, "empty passphrase");
  if (iterations == 0) throw Error(Errc::kInvalidArgument, "zero iterations");
  Keystore ks(std::move(path), std::move(passphrase), iterations);
  ks.user_id_ = "u-" + to_hex(random_array<8>());
  return ks;
}

Keystore Keystore::open(std::filesystem::path path, std::string passphrase) {
  Bytes file;
  try {
    file = read_file(path);
  } catch (const Error& e) {
    throw Error(Errc::kIo, "cannot read keystore " + path.string());
  }
  if (file.size() < kHeaderSize + Ciphertext::kOverhead ||
      !std::equal(kMagic.begin(), kMagic.end(), file.begin())) {
    throw Error(Errc::kAuthFailure, "not a keystore");
  }
  ByteReader hdr(ByteView(file).first(kHeaderSize), Errc::kAuthFailure);
  hdr.raw(kMagic.size());
  auto iterations = hdr.u32();
  auto salt = hdr.raw(kSaltSize);
  if (iterations == 0 || iterations > 100'000'000) throw Error(Errc::kAuthFailure, "bad header");
  auto key = stretch(passphrase, salt, iterations);
  // Authenticated as a whole: a wrong passphrase yields no records at all.
  auto plain = aead::open(key, Ciphertext::decode(ByteView(file).subspan(kHeaderSize)),
                          ByteView(file).first(kHeaderSize));

  Keystore ks(std::move(path), std::move(passphrase), iterations);
  auto doc = nlohmann::json::parse(plain.begin(), plain.end());
  ks.user_id_ = doc.at("user_id").get<std::string>();
  for (const auto& r : doc.at("records")) {
    KeyRecord rec{r.at("image_ref").get<std::uint64_t>(),
                  ImageKey::from_bytes(from_hex(r.at("key").get<std::string>())),
                  load_precomputed(from_hex(r.at("vector").get<std::string>())),
                  r.at("origin").get<bool>()};
    ks.records_.emplace(rec.image_ref, std::move(rec));
  }
  return ks;
}

Keystore Keystore::open_or_create(std::filesystem::path path, std::string passphrase,
                                  std::uint32_t iterations) {
  if (std::filesystem::exists(path)) return open(std::move(path), std::move(passphrase));
  return create(std::move(path), std::move(passphrase), iterations);
}

void Keystore::set_user_id(std::string id) {
  if (id.empty()) throw Error(Errc::kInvalidArgument, "empty user id");
  std::lock_guard lock(mu_);
  user_id_ = std::move(id);
}

void Keystore::put(const KeyRecord& record) {
  std::lock_guard lock(mu_);
  records_.insert_or_assign(record.image_ref, record);
}

std::optional<KeyRecord> Keystore::find(ImageId ref) const {
  std::lock_guard lock(mu_);
  auto it = records_.find(ref);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::map<ImageId, KeyRecord> Keystore::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

void Keystore::save() const {
  nlohmann::json doc;
  {
    std::lock_guard lock(mu_);
    doc["user_id"] = user_id_;
    doc["records"] = nlohmann::json::array();
    for (const auto& [ref, r] : records_) {
      doc["records"].push_back({{"image_ref", ref},
                                {"key", to_hex(r.key.bytes())},
                                {"vector", to_hex(serialize(r.vector))},
                                {"origin", r.origin}});
    }
  }
  auto plain = doc.dump();
  ByteWriter w;
  w.raw(kMagic);
  w.u32(iterations_);
  w.raw(random_array<kSaltSize>());
  Bytes header = std::move(w).take();
  auto key = stretch(passphrase_, ByteView(header).subspan(12), iterations_);
  auto sealed = aead::seal(key, as_bytes(plain), header).encode();
  OPENSSL_cleanse(plain.data(), plain.size());
  header.insert(header.end(), sealed.begin(), sealed.end());
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  write_file_atomic(path_, header);
}

}  // namespace sdedup::client
