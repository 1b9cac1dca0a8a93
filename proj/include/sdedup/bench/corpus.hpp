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
#include <optional>
#include <string>
#include <vector>

#include "sdedup/features/image.hpp"

namespace sdedup::bench {

// splitmix64 seeding a xoshiro256** generator. Same seed, same stream on
// every platform, unlike the std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // [lo, hi)
  int integer(int lo, int hi);
  double normal();

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0;
};

// Synthetic photo stand-in: a two-colour gradient, 4-9 random shapes,
// sensor noise, a sinusoidal luminance texture and a global exposure
// factor. Image `index` depends only on (seed, index).
Image synth_image(std::uint64_t seed, std::uint64_t index, int size = 128);
std::vector<Image> synth_corpus(std::uint64_t seed, std::size_t count, int size = 128);

// img_0000.png, img_0001.png, ...
void write_corpus(const std::filesystem::path& dir, const std::vector<Image>& images);
// Every decodable PNG/BMP in `dir`, sorted by name. Undecodable files are
// counted in `skipped`.
std::vector<Image> load_corpus(const std::filesystem::path& dir, std::size_t* skipped = nullptr);

enum class Distortion {
  kBlur,
  kBrighten,
  kGaussianNoise,
  kResize,
  kSaturate,
  kSharpen,
  kSolarize,
  kSaltPepper,
};

const std::vector<Distortion>& all_distortions();
const char* name_of(Distortion d);
std::optional<Distortion> parse_distortion(const std::string& name);

// Level 0 is always the identity.
int level_count(Distortion d);
double strength(Distortion d, int level);

// Deterministic given the rng state (only noise kinds draw from it).
Image distort(const Image& image, Distortion d, int level, Rng& rng);

// Separable Gaussian, edge-clamped. Exposed for the unsharp mask and tests.
Image gaussian_blur(const Image& image, int kernel, double sigma);

}  // namespace sdedup::bench
