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

#include "sdedup/bench/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace fs = std::filesystem;

namespace sdedup::bench {
namespace {

std::uint64_t splitmix(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint8_t clamp8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
}

double luma(const std::uint8_t* p) { return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]; }

Image bilinear(const Image& in, std::uint32_t w, std::uint32_t h) {
  Image out = Image::blank(w, h);
  for (std::uint32_t y = 0; y < h; ++y) {
    double sy = std::clamp((y + 0.5) * in.height / h - 0.5, 0.0, in.height - 1.0);
    auto y0 = static_cast<std::uint32_t>(sy);
    auto y1 = std::min(y0 + 1, in.height - 1);
    double fy = sy - y0;
    for (std::uint32_t x = 0; x < w; ++x) {
      double sx = std::clamp((x + 0.5) * in.width / w - 0.5, 0.0, in.width - 1.0);
      auto x0 = static_cast<std::uint32_t>(sx);
      auto x1 = std::min(x0 + 1, in.width - 1);
      double fx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        double top = in.at(x0, y0)[c] * (1 - fx) + in.at(x1, y0)[c] * fx;
        double bot = in.at(x0, y1)[c] * (1 - fx) + in.at(x1, y1)[c] * fx;
        out.at(x, y)[c] = clamp8(top * (1 - fy) + bot * fy);
      }
    }
  }
  return out;
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  for (auto& s : s_) s = splitmix(seed);
}

std::uint64_t Rng::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

int Rng::integer(int lo, int hi) {
  return lo + static_cast<int>(uniform() * (hi - lo));
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = (static_cast<double>(next() >> 11) + 1) * 0x1.0p-53;
  double u2 = uniform();
  double r = std::sqrt(-2 * std::log(u1));
  spare_ = r * std::sin(2 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2 * std::numbers::pi * u2);
}

Image synth_image(std::uint64_t seed, std::uint64_t index, int size) {
  Rng r(seed ^ (0xa0761d6478bd642full * (index + 1)));
  const int S = size;
  std::vector<double> px(static_cast<std::size_t>(S) * S * 3);
  auto at = [&](int x, int y, int c) -> double& { return px[(static_cast<std::size_t>(y) * S + x) * 3 + c]; };

  double dark[3], bright[3];
  for (auto& c : dark) c = r.integer(0, 90);
  for (auto& c : bright) c = r.integer(150, 256);
  if (r.uniform() < 0.5) std::swap(dark, bright);
  const double ang = r.uniform(0, 2 * std::numbers::pi);
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      double t = ((x * std::cos(ang) + y * std::sin(ang)) / S + 1) / 2;
      for (int c = 0; c < 3; ++c) at(x, y, c) = dark[c] * (1 - t) + bright[c] * t;
    }
  }

  const int shapes = r.integer(4, 10);
  for (int s = 0; s < shapes; ++s) {
    double col[3];
    for (auto& c : col) c = r.integer(0, 256);
    const int kind = r.integer(0, 3);
    const double cx = r.uniform(0, S), cy = r.uniform(0, S), rad = r.uniform(12, 48);
    double aspect = 1, freq = 0;
    if (kind == 1) aspect = r.uniform(0.3, 1);
    if (kind == 2) freq = r.uniform(0.05, 0.3);
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        const double dx = x - cx, dy = y - cy;
        bool in = false;
        if (kind == 0) {
          in = dx * dx + dy * dy < rad * rad;
        } else if (kind == 1) {
          in = std::abs(dx) < rad && std::abs(dy) < rad * aspect;
        } else {
          // Striped disk.
          in = std::sin((x * std::cos(ang + 1) + y * std::sin(ang + 1)) * freq) > 0 &&
               dx * dx + dy * dy < 4 * rad * rad;
        }
        if (in) {
          for (int c = 0; c < 3; ++c) at(x, y, c) = col[c];
        }
      }
    }
  }

  for (auto& v : px) v += 4 * r.normal();
  const double tf = r.uniform(0.02, 0.12), ta = r.uniform(0, 2 * std::numbers::pi);
  const double exposure = r.uniform(0.4, 1.3);
  Image img = Image::blank(static_cast<std::uint32_t>(S), static_cast<std::uint32_t>(S));
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      double tex = 1 + 0.25 * std::sin((x * std::cos(ta) + y * std::sin(ta)) * tf);
      for (int c = 0; c < 3; ++c) {
        img.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y))[c] =
            clamp8(at(x, y, c) * tex * exposure);
      }
    }
  }
  return img;
}

std::vector<Image> synth_corpus(std::uint64_t seed, std::size_t count, int size) {
  std::vector<Image> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_image(seed, i, size));
  return out;
}

void write_corpus(const fs::path& dir, const std::vector<Image>& images) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%04zu.png", i);
    write_file(dir / name, encode_png(images[i]));
  }
}

std::vector<Image> load_corpus(const fs::path& dir, std::size_t* skipped) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  std::size_t bad = 0;
  for (const auto& f : files) {
    try {
      out.push_back(decode_image(read_file(f)));
    } catch (const Error&) {
      ++bad;
    }
  }
  if (skipped) *skipped = bad;
  return out;
}

const std::vector<Distortion>& all_distortions() {
  static const std::vector<Distortion> kAll = {
      Distortion::kBlur,     Distortion::kBrighten, Distortion::kGaussianNoise,
      Distortion::kResize,   Distortion::kSaturate, Distortion::kSharpen,
      Distortion::kSolarize, Distortion::kSaltPepper};
  return kAll;
}

const char* name_of(Distortion d) {
  switch (d) {
    case Distortion::kBlur: return "blur";
    case Distortion::kBrighten: return "brighten";
    case Distortion::kGaussianNoise: return "gaussian_noise";
    case Distortion::kResize: return "resize";
    case Distortion::kSaturate: return "saturate";
    case Distortion::kSharpen: return "sharpen";
    case Distortion::kSolarize: return "solarize";
    case Distortion::kSaltPepper: return "salt_pepper";
  }
  return "?";
}

std::optional<Distortion> parse_distortion(const std::string& name) {
  for (auto d : all_distortions()) {
    if (name == name_of(d)) return d;
  }
  return std::nullopt;
}

namespace {

// Blur is indexed by kernel size with level 0 reserved for the identity,
// so it has one level more than the other kinds.
const std::vector<double>& grid(Distortion d) {
  static const std::vector<double> kBlur = {1, 3, 5, 7, 9, 11};
  static const std::vector<double> kBrighten = {0, 10, 25, 50, 90};
  static const std::vector<double> kNoise = {0, 5, 10, 20, 40};
  static const std::vector<double> kResize = {1.0, 0.9, 0.75, 1.25, 1.5};
  static const std::vector<double> kSaturate = {1.0, 1.1, 1.25, 1.5, 2.0};
  static const std::vector<double> kSharpen = {0, 0.25, 0.5, 1, 2};
  static const std::vector<double> kSolarize = {256, 192, 160, 128, 96};
  static const std::vector<double> kSaltPepper = {0, 0.01, 0.02, 0.05, 0.1};
  switch (d) {
    case Distortion::kBlur: return kBlur;
    case Distortion::kBrighten: return kBrighten;
    case Distortion::kGaussianNoise: return kNoise;
    case Distortion::kResize: return kResize;
    case Distortion::kSaturate: return kSaturate;
    case Distortion::kSharpen: return kSharpen;
    case Distortion::kSolarize: return kSolarize;
    case Distortion::kSaltPepper: return kSaltPepper;
  }
  throw Error(Errc::kInvalidArgument, "unknown distortion");
}

}  // namespace

int level_count(Distortion d) { return static_cast<int>(grid(d).size()); }

double strength(Distortion d, int level) {
  const auto& g = grid(d);
  if (level < 0 || level >= static_cast<int>(g.size())) {
    throw Error(Errc::kInvalidArgument, "distortion level out of range");
  }
  return g[static_cast<std::size_t>(level)];
}

Image gaussian_blur(const Image& image, int kernel, double sigma) {
  const int half = kernel / 2;
  std::vector<double> w(static_cast<std::size_t>(kernel));
  double sum = 0;
  for (int i = 0; i < kernel; ++i) {
    w[static_cast<std::size_t>(i)] = std::exp(-double((i - half) * (i - half)) / (2 * sigma * sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (auto& x : w) x /= sum;
  const int W = static_cast<int>(image.width), H = static_cast<int>(image.height);
  std::vector<double> tmp(image.data.size());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = 0; i < kernel; ++i) {
          int xx = std::clamp(x + i - half, 0, W - 1);
          acc += w[static_cast<std::size_t>(i)] * image.data[(static_cast<std::size_t>(y) * W + xx) * 3 + c];
        }
        tmp[(static_cast<std::size_t>(y) * W + x) * 3 + c] = acc;
      }
    }
  }
  Image out = Image::blank(image.width, image.height);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = 0; i < kernel; ++i) {
          int yy = std::clamp(y + i - half, 0, H - 1);
          acc += w[static_cast<std::size_t>(i)] * tmp[(static_cast<std::size_t>(yy) * W + x) * 3 + c];
        }
        out.data[(static_cast<std::size_t>(y) * W + x) * 3 + c] = clamp8(acc);
      }
    }
  }
  return out;
}

Image distort(const Image& image, Distortion d, int level, Rng& rng) {
  const double s = strength(d, level);
  if (level == 0) return image;
  Image out = image;
  const std::size_t pixels = static_cast<std::size_t>(image.width) * image.height;
  switch (d) {
    case Distortion::kBlur: {
      const int k = static_cast<int>(s);
      return gaussian_blur(image, k, k / 6.0);
    }
    case Distortion::kBrighten:
      // Adding the same offset to R, G and B raises luma by exactly s.
      for (auto& v : out.data) v = clamp8(v + s);
      return out;
    case Distortion::kGaussianNoise:
      for (auto& v : out.data) v = clamp8(v + s * rng.normal());
      return out;
    case Distortion::kResize:
      return bilinear(image, static_cast<std::uint32_t>(std::lround(image.width * s)),
                      static_cast<std::uint32_t>(std::lround(image.height * s)));
    case Distortion::kSaturate:
      for (std::size_t i = 0; i < pixels; ++i) {
        auto* p = &out.data[i * 3];
        const double l = luma(p);
        for (int c = 0; c < 3; ++c) p[c] = clamp8(l + (p[c] - l) * s);
      }
      return out;
    case Distortion::kSharpen: {
      // Unsharp mask over the 3x3, sigma 0.5 blur.
      auto blurred = gaussian_blur(image, 3, 0.5);
      for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = clamp8(image.data[i] + s * (double(image.data[i]) - blurred.data[i]));
      }
      return out;
    }
    case Distortion::kSolarize:
      for (auto& v : out.data) {
        if (v >= s) v = static_cast<std::uint8_t>(255 - v);
      }
      return out;
    case Distortion::kSaltPepper:
      for (std::size_t i = 0; i < pixels; ++i) {
        const double u = rng.uniform();
        if (u < s / 2) {
          std::fill_n(&out.data[i * 3], 3, std::uint8_t{0});
        } else if (u < s) {
          std::fill_n(&out.data[i * 3], 3, std::uint8_t{255});
        }
      }
      return out;
  }
  return out;
}

}  // namespace sdedup::bench
