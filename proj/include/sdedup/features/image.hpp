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
#include <vector>

#include "sdedup/common/bytes.hpp"

namespace sdedup {

// 8-bit RGB raster, row-major, no padding.
struct Image {
  static constexpr std::uint32_t kMinSide = 8;

  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> data;

  static Image blank(std::uint32_t width, std::uint32_t height, std::uint8_t r = 0,
                     std::uint8_t g = 0, std::uint8_t b = 0);

  // Throws Error(kInvalidImage) if the buffer size or dimensions are off.
  void validate() const;

  std::uint8_t* at(std::uint32_t x, std::uint32_t y) { return &data[(std::size_t{y} * width + x) * 3]; }
  const std::uint8_t* at(std::uint32_t x, std::uint32_t y) const {
    return &data[(std::size_t{y} * width + x) * 3];
  }
};

// Decodes PNG or BMP (24/32-bit uncompressed), sniffed by magic bytes.
// Throws Error(kDecodeFailed).
Image decode_image(ByteView file_bytes);

Bytes encode_png(const Image& image);
Bytes encode_bmp(const Image& image);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, ByteView data);

}  // namespace sdedup
