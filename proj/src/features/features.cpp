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

#include "sdedup/features/features.hpp"

#include <algorithm>
#include <cmath>

namespace sdedup {
namespace {

constexpr double kZeroNormEpsilon = 1e-12;
constexpr double kUnitTolerance = 1e-6;

// Bilinear resample with pixel-center alignment and edge clamping. Output is
// interleaved RGB doubles.
std::vector<double> resize_bilinear(const Image& image, int side) {
  std::vector<double> out(static_cast<std::size_t>(side) * side * 3);
  const double sx = static_cast<double>(image.width) / side;
  const double sy = static_cast<double>(image.height) / side;
  const double max_x = image.width - 1.0, max_y = image.height - 1.0;
  for (int oy = 0; oy < side; ++oy) {
    double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, max_y);
    auto y0 = static_cast<std::uint32_t>(fy);
    std::uint32_t y1 = std::min<std::uint32_t>(y0 + 1, image.height - 1);
    double wy = fy - y0;
    for (int ox = 0; ox < side; ++ox) {
      double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, max_x);
      auto x0 = static_cast<std::uint32_t>(fx);
      std::uint32_t x1 = std::min<std::uint32_t>(x0 + 1, image.width - 1);
      double wx = fx - x0;
      const auto* p00 = image.at(x0, y0);
      const auto* p01 = image.at(x1, y0);
      const auto* p10 = image.at(x0, y1);
      const auto* p11 = image.at(x1, y1);
      double* dst = &out[(static_cast<std::size_t>(oy) * side + ox) * 3];
      for (int c = 0; c < 3; ++c) {
        double top = p00[c] * (1 - wx) + p01[c] * wx;
        double bottom = p10[c] * (1 - wx) + p11[c] * wx;
        dst[c] = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

}  // namespace

void ExtractorConfig::validate() const {
  if (grid < 1 || resize < grid || resize % grid != 0 || bins < 1 || bins > 256) {
    throw Error(Errc::kInvalidArgument, "extractor config: resize must be a positive multiple of grid, 1 <= bins <= 256");
  }
}

FeatureVector FeatureVector::normalized(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::kMalformedVector, "empty vector");
  double sq = 0;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(Errc::kMalformedVector, "non-finite component");
    sq += v * v;
  }
  double norm = std::sqrt(sq);
  if (norm < kZeroNormEpsilon) throw Error(Errc::kZeroVector, "norm below 1e-12");
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i] / norm);
  return FeatureVector(std::move(out));
}

FeatureVector FeatureVector::operator-() const {
  auto copy = values_;
  for (auto& v : copy) v = -v;
  return FeatureVector(std::move(copy));
}

FeatureVector extract_features(const Image& image, const ExtractorConfig& config) {
  image.validate();
  config.validate();
  const int side = config.resize;
  const int cell = side / config.grid;
  const auto rgb = resize_bilinear(image, side);
  const double pixels = static_cast<double>(side) * side;

  std::vector<double> features(static_cast<std::size_t>(config.dim()), 0.0);
  auto block = std::span(features).first(static_cast<std::size_t>(config.grid) * config.grid);
  auto hist = std::span(features).subspan(block.size());

  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double* px = &rgb[(static_cast<std::size_t>(y) * side + x) * 3];
      double luma = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
      block[static_cast<std::size_t>(y / cell) * config.grid + x / cell] += luma;
      for (int c = 0; c < 3; ++c) {
        int bin = std::min(config.bins - 1, static_cast<int>(px[c] * config.bins / 256.0));
        hist[static_cast<std::size_t>(c) * config.bins + bin] += 1.0;
      }
    }
  }
  const double cell_area = static_cast<double>(cell) * cell;
  for (auto& b : block) b /= cell_area;
  for (auto& h : hist) h /= pixels;

  double mean = 0;
  for (double f : features) mean += f;
  mean /= static_cast<double>(features.size());
  for (auto& f : features) f -= mean;
  return FeatureVector::normalized(features);
}

Bytes serialize(const FeatureVector& v) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(v.dim()));
  for (float f : v.values()) w.f32(f);
  return std::move(w).take();
}

FeatureVector load_precomputed(ByteView bytes) {
  ByteReader r(bytes, Errc::kMalformedVector);
  const std::uint32_t dim = r.u32();
  if (dim == 0 || r.remaining() != std::size_t{dim} * 4) {
    throw Error(Errc::kMalformedVector, "length does not match header dim");
  }
  std::vector<float> raw(dim);
  double sq = 0;
  for (auto& f : raw) {
    f = r.f32();
    if (!std::isfinite(f)) throw Error(Errc::kMalformedVector, "non-finite component");
    sq += static_cast<double>(f) * f;
  }
  double norm = std::sqrt(sq);
  if (norm < kZeroNormEpsilon) throw Error(Errc::kZeroVector, "norm below 1e-12");
  // Already-unit input is kept bit-for-bit so serialization round trips.
  if (std::abs(norm - 1.0) <= kUnitTolerance) return FeatureVector(std::move(raw));
  std::vector<double> wide(raw.begin(), raw.end());
  return FeatureVector::normalized(wide);
}

double cosine_similarity(const FeatureVector& a, const FeatureVector& b) {
  if (a.dim() != b.dim()) throw Error(Errc::kDimMismatch, "feature dims differ");
  double dot = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += static_cast<double>(a[i]) * b[i];
  return std::clamp(dot, -1.0, 1.0);
}

}  // namespace sdedup
