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
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdedup/common/error.hpp"

namespace sdedup {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using Digest32 = std::array<std::uint8_t, 32>;

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

std::string to_hex(ByteView data);
Bytes from_hex(std::string_view hex);

// Constant-time comparison; lengths are not secret.
bool ct_equal(ByteView a, ByteView b);

// Big-endian append-only encoder.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void raw(ByteView data) { out_.insert(out_.end(), data.begin(), data.end()); }
  void raw(std::string_view s) { raw(as_bytes(s)); }
  // u32 length prefix followed by the bytes.
  void blob(ByteView data);
  // u16 length prefix followed by the bytes.
  void str(std::string_view s);

  const Bytes& bytes() const& { return out_; }
  Bytes take() && { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  Bytes out_;
};

// Bounds-checked big-endian decoder. Any overrun throws Error(kProtocol)
// unless a different code is supplied at construction.
class ByteReader {
 public:
  explicit ByteReader(ByteView data, Errc overrun = Errc::kProtocol)
      : data_(data), overrun_(overrun) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  ByteView raw(std::size_t n);
  template <std::size_t N>
  std::array<std::uint8_t, N> fixed() {
    std::array<std::uint8_t, N> out{};
    auto v = raw(N);
    std::copy(v.begin(), v.end(), out.begin());
    return out;
  }
  Bytes blob(std::size_t max_len = 64u << 20);
  std::string str();

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }
  // Throws unless every byte was consumed.
  void expect_done() const;

 private:
  void need(std::size_t n) const;

  ByteView data_;
  std::size_t pos_ = 0;
  Errc overrun_;
};

}  // namespace sdedup
