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

#include "sdedup/features/image.hpp"

#include <png.h>

#include <cstring>
#include <fstream>

namespace sdedup {
namespace {

std::uint32_t le32(ByteView b, std::size_t off) {
  return std::uint32_t{b[off]} | std::uint32_t{b[off + 1]} << 8 | std::uint32_t{b[off + 2]} << 16 |
         std::uint32_t{b[off + 3]} << 24;
}

std::uint16_t le16(ByteView b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | b[off + 1] << 8);
}

void put_le32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_le16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

Image decode_bmp(ByteView b) {
  if (b.size() < 54) throw Error(Errc::kDecodeFailed, "bmp: truncated header");
  const std::uint32_t offset = le32(b, 10);
  const std::uint32_t dib_size = le32(b, 14);
  if (dib_size < 40) throw Error(Errc::kDecodeFailed, "bmp: unsupported DIB header");
  const auto width = static_cast<std::int32_t>(le32(b, 18));
  const auto height = static_cast<std::int32_t>(le32(b, 22));
  const std::uint16_t bpp = le16(b, 28);
  const std::uint32_t compression = le32(b, 30);
  if (bpp != 24 && bpp != 32) throw Error(Errc::kDecodeFailed, "bmp: only 24/32-bit supported");
  if (compression != 0 && !(compression == 3 && bpp == 32)) {
    throw Error(Errc::kDecodeFailed, "bmp: compressed bitmaps unsupported");
  }
  if (width <= 0 || height == 0 || width > 1 << 15 || std::abs(height) > 1 << 15) {
    throw Error(Errc::kDecodeFailed, "bmp: bad dimensions");
  }
  const bool top_down = height < 0;
  const auto w = static_cast<std::uint32_t>(width);
  const auto h = static_cast<std::uint32_t>(std::abs(height));
  const std::size_t stride = ((std::size_t{w} * bpp / 8) + 3) & ~std::size_t{3};
  if (offset > b.size() || b.size() - offset < stride * h) {
    throw Error(Errc::kDecodeFailed, "bmp: truncated pixel data");
  }
  Image img = Image::blank(w, h);
  const std::size_t step = bpp / 8;
  for (std::uint32_t row = 0; row < h; ++row) {
    const std::uint32_t y = top_down ? row : h - 1 - row;
    const std::uint8_t* src = b.data() + offset + row * stride;
    for (std::uint32_t x = 0; x < w; ++x) {
      auto* dst = img.at(x, y);
      dst[0] = src[x * step + 2];
      dst[1] = src[x * step + 1];
      dst[2] = src[x * step + 0];
    }
  }
  return img;
}

Image decode_png(ByteView b) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, b.data(), b.size())) {
    throw Error(Errc::kDecodeFailed, std::string("png: ") + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  Image img;
  img.width = png.width;
  img.height = png.height;
  img.data.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.data.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw Error(Errc::kDecodeFailed, "png: " + msg);
  }
  return img;
}

}  // namespace

Image Image::blank(std::uint32_t width, std::uint32_t height, std::uint8_t r, std::uint8_t g,
                   std::uint8_t b) {
  Image img;
  img.width = width;
  img.height = height;
  img.data.resize(std::size_t{width} * height * 3);
  for (std::size_t i = 0; i < img.data.size(); i += 3) {
    img.data[i] = r;
    img.data[i + 1] = g;
    img.data[i + 2] = b;
  }
  return img;
}

void Image::validate() const {
  if (width < kMinSide || height < kMinSide) {
    throw Error(Errc::kInvalidImage, "image smaller than 8x8");
  }
  if (data.size() != std::size_t{width} * height * 3) {
    throw Error(Errc::kInvalidImage, "pixel buffer length != width*height*3");
  }
}

Image decode_image(ByteView file_bytes) {
  static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  Image img;
  if (file_bytes.size() >= 8 && std::memcmp(file_bytes.data(), kPngMagic, 8) == 0) {
    img = decode_png(file_bytes);
  } else if (file_bytes.size() >= 2 && file_bytes[0] == 'B' && file_bytes[1] == 'M') {
    img = decode_bmp(file_bytes);
  } else {
    throw Error(Errc::kDecodeFailed, "unrecognized image format (expected PNG or BMP)");
  }
  try {
    img.validate();
  } catch (const Error& e) {
    throw Error(Errc::kDecodeFailed, e.what());
  }
  return img;
}

Bytes encode_png(const Image& image) {
  image.validate();
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = image.width;
  png.height = image.height;
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.data.data(), 0, nullptr)) {
    throw Error(Errc::kIo, std::string("png encode: ") + png.message);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.data.data(), 0, nullptr)) {
    throw Error(Errc::kIo, std::string("png encode: ") + png.message);
  }
  out.resize(size);
  return out;
}

Bytes encode_bmp(const Image& image) {
  image.validate();
  const std::size_t stride = (std::size_t{image.width} * 3 + 3) & ~std::size_t{3};
  const std::size_t pixel_bytes = stride * image.height;
  Bytes out;
  out.reserve(54 + pixel_bytes);
  out.push_back('B');
  out.push_back('M');
  put_le32(out, static_cast<std::uint32_t>(54 + pixel_bytes));
  put_le32(out, 0);
  put_le32(out, 54);
  put_le32(out, 40);
  put_le32(out, image.width);
  put_le32(out, image.height);
  put_le16(out, 1);
  put_le16(out, 24);
  put_le32(out, 0);
  put_le32(out, static_cast<std::uint32_t>(pixel_bytes));
  put_le32(out, 2835);
  put_le32(out, 2835);
  put_le32(out, 0);
  put_le32(out, 0);
  for (std::uint32_t row = 0; row < image.height; ++row) {
    const std::uint32_t y = image.height - 1 - row;
    for (std::uint32_t x = 0; x < image.width; ++x) {
      const auto* p = image.at(x, y);
      out.push_back(p[2]);
      out.push_back(p[1]);
      out.push_back(p[0]);
    }
    for (std::size_t pad = std::size_t{image.width} * 3; pad < stride; ++pad) out.push_back(0);
  }
  return out;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, ByteView data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::kIo, "short write to " + path.string());
}

}  // namespace sdedup
