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

#include "sdedup/server/store.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "sdedup/common/hash.hpp"

namespace fs = std::filesystem;

namespace sdedup::server {
namespace {

[[noreturn]] void io_error(const std::string& what) {
  throw Error(Errc::kIo, what + ": " + std::strerror(errno));
}

void write_all(int fd, ByteView data, const std::string& what) {
  std::size_t off = 0;
  while (off < data.size()) {
    auto n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error(what);
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<Bytes> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t crc_of(ByteView data) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0, nullptr, 0), data.data(), static_cast<uInt>(data.size())));
}

}  // namespace

BlobStore::BlobStore(fs::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) fs::create_directories(dir_);
}

fs::path BlobStore::path_of(const Digest32& digest) const { return dir_ / to_hex(digest); }

Digest32 BlobStore::put(ByteView data, const CrashHook& hook) {
  auto digest = sha256(data);
  if (dir_.empty()) {
    std::lock_guard lock(mu_);
    memory_.try_emplace(digest, data.begin(), data.end());
    return digest;
  }
  auto path = path_of(digest);
  if (!fs::exists(path)) {
    // Unique temp name: two uploads of the same ciphertext may race.
    auto tmp = dir_ / (to_hex(digest) + "." + to_hex(random_array<6>()) + ".tmp");
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd < 0) io_error("open " + tmp.string());
    try {
      write_all(fd, data.first(data.size() / 2), "write blob");
      if (hook) hook("blob-partial");
      write_all(fd, data.subspan(data.size() / 2), "write blob");
      if (::fsync(fd) != 0) io_error("fsync blob");
    } catch (...) {
      ::close(fd);
      fs::remove(tmp);
      throw;
    }
    ::close(fd);
    if (::rename(tmp.c_str(), path.c_str()) != 0) io_error("rename blob");
    fsync_dir(dir_);
  }
  auto back = slurp(path);
  if (!back || sha256(*back) != digest) throw Error(Errc::kIo, "blob verification failed");
  if (hook) hook("blob-written");
  return digest;
}

std::optional<Bytes> BlobStore::get(const Digest32& digest) const {
  std::optional<Bytes> data;
  if (dir_.empty()) {
    std::lock_guard lock(mu_);
    auto it = memory_.find(digest);
    if (it != memory_.end()) data = it->second;
  } else {
    data = slurp(path_of(digest));
  }
  if (data && sha256(*data) != digest) throw Error(Errc::kCorruptSnapshot, "blob digest mismatch");
  return data;
}

bool BlobStore::contains(const Digest32& digest) const {
  if (dir_.empty()) {
    std::lock_guard lock(mu_);
    return memory_.contains(digest);
  }
  return fs::exists(path_of(digest));
}

void BlobStore::remove(const Digest32& digest) {
  if (dir_.empty()) {
    std::lock_guard lock(mu_);
    memory_.erase(digest);
    return;
  }
  fs::remove(path_of(digest));
}

std::vector<Digest32> BlobStore::list() const {
  std::vector<Digest32> out;
  if (dir_.empty()) {
    std::lock_guard lock(mu_);
    for (const auto& [d, _] : memory_) out.push_back(d);
    return out;
  }
  for (const auto& e : fs::directory_iterator(dir_)) {
    auto name = e.path().filename().string();
    if (name.size() != 64) continue;
    try {
      auto raw = from_hex(name);
      Digest32 d{};
      std::copy(raw.begin(), raw.end(), d.begin());
      out.push_back(d);
    } catch (const Error&) {
    }
  }
  return out;
}

std::vector<WalRecord> Wal::read(const fs::path& path, std::uint64_t from,
                                 std::uint64_t& good_end) {
  std::vector<WalRecord> out;
  good_end = from;
  auto data = slurp(path);
  if (!data) return out;
  if (from > data->size()) throw Error(Errc::kCorruptSnapshot, "log shorter than checkpoint");
  ByteView rest = ByteView(*data).subspan(from);
  std::uint64_t offset = from;
  while (rest.size() >= 9) {
    ByteReader r(rest);
    auto len = r.u32();
    auto crc = r.u32();
    if (len == 0 || len > rest.size() - 8) break;
    auto body = rest.subspan(8, len);
    if (crc_of(body) != crc) break;
    auto type = body[0];
    if (type < 1 || type > 3) break;
    offset += 8 + len;
    out.push_back({static_cast<WalType>(type), Bytes(body.begin() + 1, body.end()), offset});
    rest = rest.subspan(8 + len);
  }
  good_end = offset;
  return out;
}

Wal::Wal(fs::path path, std::uint64_t good_end) : path_(std::move(path)), size_(good_end) {
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) io_error("open " + path_.string());
  if (::ftruncate(fd_, static_cast<off_t>(good_end)) != 0) io_error("truncate log");
  if (::lseek(fd_, static_cast<off_t>(good_end), SEEK_SET) < 0) io_error("seek log");
  ::fsync(fd_);
  fsync_dir(path_.parent_path());
}

Wal::~Wal() {
  if (fd_ >= 0) ::close(fd_);
}

void Wal::append(WalType type, ByteView payload, const CrashHook& hook) {
  ByteWriter body;
  body.u8(static_cast<std::uint8_t>(type));
  body.raw(payload);
  ByteWriter rec;
  rec.u32(static_cast<std::uint32_t>(body.size()));
  rec.u32(crc_of(body.bytes()));
  rec.raw(body.bytes());
  ByteView bytes = rec.bytes();
  write_all(fd_, bytes.first(bytes.size() / 2), "append log");
  if (hook) hook("wal-torn");
  write_all(fd_, bytes.subspan(bytes.size() / 2), "append log");
  if (::fdatasync(fd_) != 0) io_error("fdatasync log");
  size_ += bytes.size();
  if (hook) hook("wal-synced");
}

}  // namespace sdedup::server
