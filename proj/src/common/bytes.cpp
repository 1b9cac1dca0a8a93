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

#include "sdedup/common/bytes.hpp"

#include <openssl/crypto.h>

#include <bit>
#include <cstring>

namespace sdedup {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kInvalidImage: return "InvalidImage";
    case Errc::kDecodeFailed: return "DecodeFailed";
    case Errc::kMalformedVector: return "MalformedVector";
    case Errc::kZeroVector: return "ZeroVector";
    case Errc::kDimMismatch: return "DimMismatch";
    case Errc::kBadDimensions: return "BadDimensions";
    case Errc::kDuplicateId: return "DuplicateId";
    case Errc::kWrongDigestCount: return "WrongDigestCount";
    case Errc::kMissingGeneration: return "MissingGeneration";
    case Errc::kEmptyPassword: return "EmptyPassword";
    case Errc::kBadGroup: return "BadGroup";
    case Errc::kInvalidElement: return "InvalidElement";
    case Errc::kSessionConsumed: return "SessionConsumed";
    case Errc::kEntropyUnavailable: return "EntropyUnavailable";
    case Errc::kAuthFailure: return "AuthFailure";
    case Errc::kProtocol: return "ProtocolError";
    case Errc::kTimeout: return "Timeout";
    case Errc::kTransport: return "TransportError";
    case Errc::kCorruptSnapshot: return "CorruptSnapshot";
    case Errc::kIo: return "IoError";
  }
  return "Unknown";
}

std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw Error(Errc::kInvalidArgument, "odd hex length");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::kInvalidArgument, "bad hex digit");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

bool ct_equal(ByteView a, ByteView b) {
  if (a.size() != b.size()) return false;
  if (a.empty()) return true;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

void ByteWriter::u16(std::uint16_t v) {
  u8(static_cast<std::uint8_t>(v >> 8));
  u8(static_cast<std::uint8_t>(v));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) u8(static_cast<std::uint8_t>(v >> s));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) u8(static_cast<std::uint8_t>(v >> s));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::blob(ByteView data) {
  u32(static_cast<std::uint32_t>(data.size()));
  raw(data);
}

void ByteWriter::str(std::string_view s) {
  if (s.size() > 0xffff) throw Error(Errc::kInvalidArgument, "string too long");
  u16(static_cast<std::uint16_t>(s.size()));
  raw(s);
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) throw Error(overrun_, "truncated input");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2);
  std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] << 8 | data_[pos_ + 1]);
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = v << 8 | data_[pos_ + i];
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = v << 8 | data_[pos_ + i];
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

ByteView ByteReader::raw(std::size_t n) {
  need(n);
  auto v = data_.subspan(pos_, n);
  pos_ += n;
  return v;
}

Bytes ByteReader::blob(std::size_t max_len) {
  auto n = u32();
  if (n > max_len) throw Error(overrun_, "length field exceeds limit");
  auto v = raw(n);
  return {v.begin(), v.end()};
}

std::string ByteReader::str() {
  auto n = u16();
  auto v = raw(n);
  return {v.begin(), v.end()};
}

void ByteReader::expect_done() const {
  if (!done()) throw Error(overrun_, "trailing bytes");
}

}  // namespace sdedup
