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

#include <span>
#include <vector>

#include "sdedup/common/bytes.hpp"
#include "sdedup/features/image.hpp"

namespace sdedup {

// Layout of the handcrafted descriptor: a grid x grid block-mean luma map of
// the image resized to resize x resize, followed by one `bins`-bin intensity
// histogram per RGB channel.
struct ExtractorConfig {
  int resize = 64;
  int grid = 8;
  int bins = 32;

  int dim() const { return grid * grid + 3 * bins; }
  void validate() const;
};

// Unit-length descriptor. Only constructible through normalization, so the
// unit-norm invariant holds for every instance.
class FeatureVector {
 public:
  // Scales `values` to unit length. Throws Error(kZeroVector) when the input
  // norm is below 1e-12 and Error(kMalformedVector) on non-finite entries.
  static FeatureVector normalized(std::span<const double> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const float> values() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  FeatureVector operator-() const;
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  explicit FeatureVector(std::vector<float> values) : values_(std::move(values)) {}
  friend FeatureVector load_precomputed(ByteView bytes);

  std::vector<float> values_;
};

// Pure function of (pixels, config).
FeatureVector extract_features(const Image& image, const ExtractorConfig& config = {});

// 4-byte big-endian dim followed by dim big-endian IEEE-754 floats.
Bytes serialize(const FeatureVector& v);
FeatureVector load_precomputed(ByteView bytes);

// Dot product of two unit vectors, clamped to [-1, 1]. Throws kDimMismatch.
double cosine_similarity(const FeatureVector& a, const FeatureVector& b);

}  // namespace sdedup
