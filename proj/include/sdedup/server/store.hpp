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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

#include "sdedup/common/bytes.hpp"
#include "sdedup/common/file_io.hpp"

namespace sdedup::server {

// Called at named points on the durable write path. The crash harness
// uses it to kill the process mid-operation.
using CrashHook = std::function<void(std::string_view point)>;

// Content-addressed ciphertext store: blobs/<sha256 hex>. An empty path
// keeps everything in memory.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path dir = {});

  // Atomic write (temp file, fsync, rename), then read back and checked
  // against the digest. Throws Error(kIo).
  Digest32 put(ByteView data, const CrashHook& hook = {});
  // Throws Error(kCorruptSnapshot) if the stored bytes no longer match.
  std::optional<Bytes> get(const Digest32& digest) const;
  bool contains(const Digest32& digest) const;
  void remove(const Digest32& digest);
  std::vector<Digest32> list() const;

 private:
  std::filesystem::path path_of(const Digest32& digest) const;

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<Digest32, Bytes> memory_;
};

enum class WalType : std::uint8_t {
  kGenerationCreated = 1,
  kImageCommitted = 2,
  kExchangeCompleted = 3,
};

struct WalRecord {
  WalType type;
  Bytes payload;
  std::uint64_t end_offset = 0;
};

// Append-only log. Record: u32 len || u32 crc32(type || payload) || type || payload,
// where len counts type and payload.
class Wal {
 public:
  // Reads every intact record starting at `from`. `good_end` receives the
  // offset just past the last intact one; anything after it is a torn tail.
  static std::vector<WalRecord> read(const std::filesystem::path& path, std::uint64_t from,
                                     std::uint64_t& good_end);

  // Opens for appending after truncating to `good_end`.
  Wal(std::filesystem::path path, std::uint64_t good_end);
  ~Wal();
  Wal(const Wal&) = delete;
  Wal& operator=(const Wal&) = delete;

  // Durable once this returns (fdatasync). Not thread-safe; the caller
  // serializes commits.
  void append(WalType type, ByteView payload, const CrashHook& hook = {});
  std::uint64_t size() const { return size_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::uint64_t size_ = 0;
};

}  // namespace sdedup::server
