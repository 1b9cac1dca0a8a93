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

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "sdedup/crypto/crypto.hpp"
#include "sdedup/features/features.hpp"
#include "sdedup/index/index.hpp"

namespace sdedup::client {

struct KeyRecord {
  ImageId image_ref = 0;
  ImageKey key;
  FeatureVector vector;
  bool origin = false;  // we uploaded the ciphertext ourselves
};

// Image keys and feature vectors, sealed under a passphrase
// (PBKDF2-HMAC-SHA256 then AES-256-GCM). Never written in the clear.
class Keystore {
 public:
  static constexpr std::uint32_t kDefaultIterations = 200'000;

  // Fresh store with a random user id; nothing is written until save().
  static Keystore create(std::filesystem::path path, std::string passphrase,
                         std::uint32_t iterations = kDefaultIterations);
  // Error(kAuthFailure) for a wrong passphrase or a damaged file,
  // Error(kIo) if it cannot be read.
  static Keystore open(std::filesystem::path path, std::string passphrase);
  static Keystore open_or_create(std::filesystem::path path, std::string passphrase,
                                 std::uint32_t iterations = kDefaultIterations);

  Keystore(Keystore&& other) noexcept;

  const std::string& user_id() const { return user_id_; }
  void set_user_id(std::string id);
  void put(const KeyRecord& record);
  std::optional<KeyRecord> find(ImageId ref) const;
  std::map<ImageId, KeyRecord> records() const;
  // Atomic replace of the file.
  void save() const;

 private:
  Keystore(std::filesystem::path path, std::string passphrase, std::uint32_t iterations)
      : path_(std::move(path)), passphrase_(std::move(passphrase)), iterations_(iterations) {}

  std::filesystem::path path_;
  std::string passphrase_;
  std::uint32_t iterations_;
  std::string user_id_;
  mutable std::mutex mu_;
  std::map<ImageId, KeyRecord> records_;
};

}  // namespace sdedup::client
