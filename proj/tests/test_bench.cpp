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

#include "doctest.h"
#include "sdedup/bench/experiments.hpp"
#include "sdedup/common/hash.hpp"

using namespace sdedup;
using namespace sdedup::bench;
namespace fs = std::filesystem;

TEST_CASE("synthetic corpus is a pure function of the seed") {
  auto a = synth_corpus(3, 12), b = synth_corpus(3, 12), c = synth_corpus(4, 12);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].data == b[i].data);
  CHECK(a[0].data != c[0].data);
  CHECK(a[0].data != a[1].data);
}

TEST_CASE("level zero of every distortion is the identity") {
  auto img = synth_image(1, 0);
  // Solarize only touches bright channels.
  for (std::uint32_t x = 0; x < 8; ++x) img.at(x, 0)[0] = 250;
  for (auto d : all_distortions()) {
    Rng rng(9);
    auto out = distort(img, d, 0, rng);
    CHECK_MESSAGE(out.data == img.data, std::string(name_of(d)));
    CHECK(out.width == img.width);
    for (int level = 1; level < level_count(d); ++level) {
      Rng r1(5), r2(5);
      auto x = distort(img, d, level, r1), y = distort(img, d, level, r2);
      CHECK(x.data == y.data);
      CHECK_MESSAGE(x.data != img.data, std::string(name_of(d)) << " level " << level);
    }
  }
  CHECK(parse_distortion("salt_pepper") == Distortion::kSaltPepper);
  CHECK_FALSE(parse_distortion("swirl").has_value());
}

TEST_CASE("features of near copies stay close, unrelated images do not") {
  auto corpus = synth_corpus(2, 10);
  double near_min = 1, far_max = -1;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Rng rng(i);
    auto v = extract_features(corpus[i]);
    auto blurred = extract_features(distort(corpus[i], Distortion::kBlur, 1, rng));
    near_min = std::min(near_min, cosine_similarity(v, blurred));
    for (std::size_t j = i + 1; j < corpus.size(); ++j) {
      far_max = std::max(far_max, cosine_similarity(v, extract_features(corpus[j])));
    }
  }
  CHECK(near_min > 0.99);
  CHECK(near_min > far_max);
}

TEST_CASE("distortion matrix is reproducible and identity matches every table") {
  auto corpus = synth_corpus(7, 16);
  MatrixConfig cfg;
  cfg.seed = 11;
  cfg.kinds = {Distortion::kGaussianNoise, Distortion::kSolarize};
  auto a = run_distortion_matrix(corpus, cfg), b = run_distortion_matrix(corpus, cfg);
  REQUIRE(a.levels.size() == b.levels.size());
  for (std::size_t i = 0; i < a.levels.size(); ++i) CHECK(a.levels[i].matches == b.levels[i].matches);
  CHECK(a.unrelated == b.unrelated);
  CHECK(a.unrelated.size() == 16 * 15 / 2);
  const auto& id = a.at(Distortion::kGaussianNoise, 0);
  CHECK(id.fraction_at_least(6) == 1.0);
  CHECK(id.histogram(6)[6] == 16);
  CHECK(a.at(Distortion::kSolarize, 4).median() < id.median());

  std::array<std::uint8_t, 8> r{};
  secure_random(r);
  auto dir = fs::temp_directory_path() / ("sdedup-bench-" + to_hex(r));
  write_matrix(a, dir);
  CHECK(fs::exists(dir / "distortion_matrix.csv"));
  CHECK(fs::exists(dir / "matrix_solarize.svg"));
  write_corpus(dir / "corpus", corpus);
  std::size_t skipped = 0;
  write_file(dir / "corpus" / "zz.png", Bytes{1, 2, 3});
  auto back = load_corpus(dir / "corpus", &skipped);
  CHECK(skipped == 1);
  REQUIRE(back.size() == corpus.size());
  CHECK(back[3].data == corpus[3].data);
  fs::remove_all(dir);
}

TEST_CASE("statistics helpers") {
  auto s = summarize({4, 1, 3, 2});
  CHECK(s.n == 4);
  CHECK(s.min == 1);
  CHECK(s.max == 4);
  CHECK(s.avg == doctest::Approx(2.5));
  CHECK(s.median == doctest::Approx(2.5));
  CHECK(s.stddev == doctest::Approx(1.2909944));
  double slope = 0, icept = 0;
  CHECK(linear_r2({1, 2, 3, 4}, {3, 5, 7, 9}, &slope, &icept) == doctest::Approx(1));
  CHECK(slope == doctest::Approx(2));
  CHECK(icept == doctest::Approx(1));
  CHECK(linear_r2({1, 2, 3, 4}, {1, -1, 1, -1}) < 0.3);
}

TEST_CASE("xoshiro stream is stable") {
  Rng a(1), b(1);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng c(1);
  double sum = 0, sq = 0;
  for (int i = 0; i < 20000; ++i) {
    double x = c.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(sum / 20000 == doctest::Approx(0).epsilon(0.03));
  CHECK(sq / 20000 == doctest::Approx(1).epsilon(0.03));
}
