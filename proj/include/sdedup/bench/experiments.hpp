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

#include <filesystem>
#include <string>
#include <vector>

#include "sdedup/bench/corpus.hpp"
#include "sdedup/index/index.hpp"

namespace sdedup::bench {

// --- distortion matrix --------------------------------------------------

struct MatrixConfig {
  DedupConfig dedup = DedupConfig::with_defaults(6, 24);
  std::uint64_t seed = 1;
  std::vector<Distortion> kinds = all_distortions();
};

struct LevelResult {
  Distortion kind{};
  int level = 0;
  double strength = 0;
  std::vector<int> matches;  // per corpus image, tables that collided with its original

  std::vector<std::size_t> histogram(int tables) const;
  double fraction_at_least(int c) const;
  double median() const;
};

struct MatrixResult {
  int tables = 0;
  int threshold = 0;
  std::vector<LevelResult> levels;
  std::vector<int> unrelated;  // per unordered pair of distinct originals

  const LevelResult& at(Distortion kind, int level) const;
  double unrelated_at_most(int k) const;
};

// Indexes every original, queries every distorted copy and records the
// collision count of the true original in the shortlist.
MatrixResult run_distortion_matrix(const std::vector<Image>& corpus, const MatrixConfig& config);

// distortion_matrix.csv, unrelated_pairs.csv and one SVG heatmap per kind.
void write_matrix(const MatrixResult& result, const std::filesystem::path& out_dir);

// --- timing -------------------------------------------------------------

struct Stats {
  std::size_t n = 0;
  double min = 0, avg = 0, max = 0, median = 0, stddev = 0;  // ms
};

Stats summarize(std::vector<double> samples_ms);

struct TimingRow {
  std::string dataset;
  std::string operation;  // hash | index | query
  int tables = 0;
  int bits = 0;
  std::size_t index_size = 0;
  Stats stats;
};

struct TimingConfig {
  std::uint64_t seed = 1;
  std::vector<int> tables = {1, 2, 4, 6, 8, 12};
  std::vector<int> bits = {8, 16, 24, 32, 48, 64};
  std::vector<std::size_t> sizes = {100, 1000, 10000, 100000};
  int query_tables = 6;
  int query_bits = 24;
  int hash_reps = 200;
  int queries = 500;
};

struct TimingResult {
  std::vector<TimingRow> rows;
  double hash_r2 = 0;           // hash median ms ~ a + b * tables * bits
  double hash_slope_us = 0;     // b, in microseconds
  double query_flatness = 0;    // max/min of per-size average query time
  double cold_query_ms = 0;     // first query against a fresh index, CPU caches evicted
  double warm_query_ms = 0;     // average of the rest, same index
};

// `vectors` supply realistic inputs; index entries beyond them use random
// digests, which exercise the tables identically.
TimingResult run_timing(const std::vector<FeatureVector>& vectors, const TimingConfig& config,
                        bool hash = true, bool index = true, bool query = true);
void write_timing(const TimingResult& result, const std::filesystem::path& out_dir);

// Least-squares fit y = a + b x; returns R^2.
double linear_r2(const std::vector<double>& x, const std::vector<double>& y, double* slope = nullptr,
                 double* intercept = nullptr);

// --- concurrency --------------------------------------------------------

struct QosConfig {
  std::vector<int> levels = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096};
  std::uint64_t seed = 1;
  DedupConfig dedup = DedupConfig::with_defaults(6, 24);
  std::size_t ciphertext_bytes = 4096;
  bool queries = true;
  bool indexing = true;
  // Empty: an in-process server on a loopback TCP port.
  std::string server;
};

struct QosRow {
  std::string workload;  // query | index
  int concurrency = 0;
  int failures = 0;
  double total_ms = 0;
  double avg_ms = 0;  // per request
  std::size_t verified = 0;  // index: images retrievable afterwards
};

struct QosResult {
  std::vector<QosRow> rows;
};

QosResult run_qos(const std::vector<FeatureVector>& vectors, const QosConfig& config);
void write_qos(const QosResult& result, const std::filesystem::path& out_dir);

}  // namespace sdedup::bench
