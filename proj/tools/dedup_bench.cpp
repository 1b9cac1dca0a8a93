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

#include <iostream>

#include <CLI11.hpp>

#include "sdedup/bench/experiments.hpp"

using namespace sdedup;
namespace fs = std::filesystem;

namespace {

std::vector<Image> corpus_at(const fs::path& dir, std::uint64_t seed, std::size_t count) {
  if (!fs::is_directory(dir) || fs::is_empty(dir)) {
    std::cerr << "generating " << count << " synthetic images in " << dir << '\n';
    bench::write_corpus(dir, bench::synth_corpus(seed, count));
  }
  std::size_t skipped = 0;
  auto images = bench::load_corpus(dir, &skipped);
  if (skipped) std::cerr << "skipped " << skipped << " undecodable files\n";
  return images;
}

std::vector<FeatureVector> vectors_of(const std::vector<Image>& images) {
  std::vector<FeatureVector> out;
  for (const auto& img : images) out.push_back(extract_features(img));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deduplication benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();
  fs::path corpus = "corpus", out = "bench-out";
  std::uint64_t seed = 1;
  std::size_t count = 200;
  int tables = 6, bits = 24, threshold = 0;
  app.add_option("--corpus", corpus, "image directory; filled with a synthetic corpus if empty");
  app.add_option("--out", out);
  app.add_option("--seed", seed);
  app.add_option("--count", count, "synthetic corpus size");
  app.add_option("--tables", tables);
  app.add_option("--bits", bits);
  app.add_option("--threshold", threshold, "0 picks ceil((tables+1)/2)");

  auto* distort = app.add_subcommand("distort", "match counts under distortions");
  std::vector<std::string> kinds;
  distort->add_option("--kinds", kinds, "subset of distortions");

  auto* timing = app.add_subcommand("timing", "hash, index and query timing");
  std::vector<std::string> ops;
  std::vector<std::size_t> sizes;
  timing->add_option("--ops", ops, "hash index query");
  timing->add_option("--sizes", sizes, "index sizes");

  auto* qos = app.add_subcommand("qos", "concurrent request handling");
  std::vector<int> levels;
  std::string server;
  qos->add_option("--levels", levels, "concurrency levels");
  qos->add_option("--server", server, "external server; default runs one in process");
  bool no_queries = false, no_index = false;
  qos->add_flag("--no-queries", no_queries);
  qos->add_flag("--no-index", no_index);

  app.add_subcommand("corpus", "only write the synthetic corpus");
  CLI11_PARSE(app, argc, argv);

  try {
    auto dedup = DedupConfig::with_defaults(tables, bits);
    if (threshold > 0) dedup.threshold = threshold;
    dedup.validate();
    auto images = corpus_at(corpus, seed, count);
    if (images.empty()) throw Error(Errc::kInvalidArgument, "corpus is empty");

    if (*distort) {
      bench::MatrixConfig cfg;
      cfg.dedup = dedup;
      cfg.seed = seed;
      if (!kinds.empty()) {
        cfg.kinds.clear();
        for (const auto& k : kinds) {
          auto d = bench::parse_distortion(k);
          if (!d) throw Error(Errc::kInvalidArgument, "unknown distortion " + k);
          cfg.kinds.push_back(*d);
        }
      }
      auto result = bench::run_distortion_matrix(images, cfg);
      bench::write_matrix(result, out);
      for (const auto& l : result.levels) {
        std::cout << bench::name_of(l.kind) << " level " << l.level << ": median " << l.median()
                  << ", >=c " << l.fraction_at_least(result.threshold) << '\n';
      }
      std::cout << "unrelated pairs with <=1 match: " << result.unrelated_at_most(1) << '\n';
    } else if (*timing) {
      bench::TimingConfig cfg;
      cfg.seed = seed;
      cfg.query_tables = tables;
      cfg.query_bits = bits;
      if (!sizes.empty()) cfg.sizes = sizes;
      auto has = [&](const char* op) {
        return ops.empty() || std::find(ops.begin(), ops.end(), op) != ops.end();
      };
      auto result = bench::run_timing(vectors_of(images), cfg, has("hash"), has("index"), has("query"));
      bench::write_timing(result, out);
      std::cout << "hash R^2 " << result.hash_r2 << ", query flatness " << result.query_flatness
                << ", cold " << result.cold_query_ms << " ms, warm " << result.warm_query_ms
                << " ms\n";
    } else if (*qos) {
      bench::QosConfig cfg;
      cfg.seed = seed;
      cfg.dedup = dedup;
      cfg.server = server;
      cfg.queries = !no_queries;
      cfg.indexing = !no_index;
      if (!levels.empty()) cfg.levels = levels;
      auto result = bench::run_qos(vectors_of(images), cfg);
      bench::write_qos(result, out);
      for (const auto& r : result.rows) {
        std::cout << r.workload << ' ' << r.concurrency << ": " << r.failures << " failures, total "
                  << r.total_ms << " ms, avg " << r.avg_ms << " ms";
        if (r.workload == "index") std::cout << ", verified " << r.verified;
        std::cout << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "dedup-bench: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
