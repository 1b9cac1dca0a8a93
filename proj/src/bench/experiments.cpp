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

#include "sdedup/bench/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <latch>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "sdedup/common/hash.hpp"
#include "sdedup/protocol/roles.hpp"
#include "sdedup/server/runner.hpp"

namespace fs = std::filesystem;
using Ms = std::chrono::duration<double, std::milli>;
using BenchClock = std::chrono::steady_clock;

namespace sdedup::bench {
namespace {

std::vector<Seed> seeds_from(Rng& rng, int count) {
  std::vector<Seed> out(static_cast<std::size_t>(count));
  for (auto& s : out) {
    for (std::size_t i = 0; i < s.size(); i += 8) {
      auto w = rng.next();
      for (int b = 0; b < 8; ++b) s[i + b] = static_cast<std::uint8_t>(w >> (8 * b));
    }
  }
  return out;
}

// A seed source that replays a fixed list, so a benchmark index is a pure
// function of the bench seed.
Index::SeedSource replay(std::vector<Seed> seeds) {
  auto shared = std::make_shared<std::vector<Seed>>(std::move(seeds));
  auto next = std::make_shared<std::size_t>(0);
  return [shared, next] {
    if (*next >= shared->size()) throw Error(Errc::kInvalidArgument, "seed list exhausted");
    return (*shared)[(*next)++];
  };
}

DigestSet digests_of(const TableGeneration& g, const FeatureVector& v) {
  DigestSet out;
  for (const auto& p : g.params) out.push_back(slsh(p, v));
  return out;
}

DigestSet random_digests(Rng& rng, int tables) {
  DigestSet out;
  for (int x = 0; x < tables; ++x) {
    Digest32 d{};
    for (std::size_t i = 0; i < d.size(); i += 8) {
      auto w = rng.next();
      for (int b = 0; b < 8; ++b) d[i + b] = static_cast<std::uint8_t>(w >> (8 * b));
    }
    out.emplace_back(d);
  }
  return out;
}

// Streams through a buffer larger than the last-level cache so the next
// measurement starts cold.
void evict_caches() {
  static std::vector<std::uint64_t> junk(std::size_t{64} << 17);  // 64 MiB
  std::uint64_t acc = 0;
  for (auto& w : junk) acc += ++w;
  volatile std::uint64_t sink = acc;
  (void)sink;
}

// --- SVG ------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<double> x, y;
};

const char* const kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                               "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

void line_chart(const fs::path& path, const std::string& title, const std::string& xlabel,
                const std::string& ylabel, const std::vector<Series>& series, bool logx,
                bool logy) {
  const double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  auto fx = [&](double v) { return logx ? std::log10(std::max(v, 1e-12)) : v; };
  auto fy = [&](double v) { return logy ? std::log10(std::max(v, 1e-12)) : v; };
  for (const auto& s : series) {
    for (double v : s.x) x0 = std::min(x0, fx(v)), x1 = std::max(x1, fx(v));
    for (double v : s.y) y0 = std::min(y0, fy(v)), y1 = std::max(y1, fy(v));
  }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  if (!logy) y0 = std::min(y0, 0.0);
  auto px = [&](double v) { return L + (fx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (fy(v) - y0) / (y1 - y0) * (H - T - B); };

  std::ofstream f(path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
    << "' font-family='sans-serif' font-size='12'>\n<rect width='100%' height='100%' fill='white'/>\n";
  f << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title << "</text>\n";
  f << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R << "' y2='" << H - B
    << "' stroke='black'/><line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='" << H - B
    << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    double xs = L + (W - L - R) * i / 4, ys = H - B - (H - T - B) * i / 4;
    auto lab = [](double v, bool lg) {
      std::ostringstream o;
      o.precision(3);
      o << (lg ? std::pow(10, v) : v);
      return o.str();
    };
    f << "<text x='" << xs << "' y='" << H - B + 16 << "' text-anchor='middle'>" << lab(xv, logx)
      << "</text>\n";
    f << "<text x='" << L - 6 << "' y='" << ys + 4 << "' text-anchor='end'>" << lab(yv, logy)
      << "</text>\n";
  }
  f << "<text x='" << (L + W - R) / 2 << "' y='" << H - 12 << "' text-anchor='middle'>" << xlabel
    << "</text>\n";
  f << "<text transform='translate(16," << (T + H - B) / 2 << ") rotate(-90)' text-anchor='middle'>"
    << ylabel << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* col = kColors[s % 8];
    f << "<polyline fill='none' stroke='" << col << "' stroke-width='2' points='";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      f << px(series[s].x[i]) << ',' << py(series[s].y[i]) << ' ';
    }
    f << "'/>\n";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      f << "<circle cx='" << px(series[s].x[i]) << "' cy='" << py(series[s].y[i])
        << "' r='3' fill='" << col << "'/>\n";
    }
    f << "<text x='" << W - R + 10 << "' y='" << T + 16 * (s + 1) << "' fill='" << col << "'>"
      << series[s].name << "</text>\n";
  }
  f << "</svg>\n";
}

// Rows are distortion levels, columns match counts 0..t, cells the
// fraction of images.
void heatmap(const fs::path& path, const std::string& title,
             const std::vector<std::string>& row_labels, const std::vector<std::vector<double>>& cells) {
  const double cw = 44, ch = 28, L = 110, T = 50;
  const std::size_t cols = cells.empty() ? 0 : cells.front().size();
  const double W = L + cw * cols + 20, H = T + ch * row_labels.size() + 50;
  std::ofstream f(path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
    << "' font-family='sans-serif' font-size='12'>\n<rect width='100%' height='100%' fill='white'/>\n";
  f << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title << "</text>\n";
  for (std::size_t c = 0; c < cols; ++c) {
    f << "<text x='" << L + cw * c + cw / 2 << "' y='" << T - 8 << "' text-anchor='middle'>" << c
      << "</text>\n";
  }
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    f << "<text x='" << L - 8 << "' y='" << T + ch * r + ch / 2 + 4 << "' text-anchor='end'>"
      << row_labels[r] << "</text>\n";
    for (std::size_t c = 0; c < cols; ++c) {
      double v = cells[r][c];
      // Blue (no images) to yellow (all images).
      int red = static_cast<int>(40 + 215 * v), green = static_cast<int>(40 + 200 * v),
          blue = static_cast<int>(140 - 100 * v);
      f << "<rect x='" << L + cw * c << "' y='" << T + ch * r << "' width='" << cw << "' height='"
        << ch << "' fill='rgb(" << red << ',' << green << ',' << blue << ")'/>\n";
      if (v > 0) {
        f << "<text x='" << L + cw * c + cw / 2 << "' y='" << T + ch * r + ch / 2 + 4
          << "' text-anchor='middle' font-size='10'>" << static_cast<int>(std::lround(v * 100))
          << "%</text>\n";
      }
    }
  }
  f << "<text x='" << L + cw * cols / 2 << "' y='" << H - 16
    << "' text-anchor='middle'>tables matching the original</text>\n</svg>\n";
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(6);
  o << v;
  return o.str();
}

}  // namespace

// --- distortion matrix --------------------------------------------------

std::vector<std::size_t> LevelResult::histogram(int tables) const {
  std::vector<std::size_t> h(static_cast<std::size_t>(tables) + 1, 0);
  for (int m : matches) ++h[static_cast<std::size_t>(m)];
  return h;
}

double LevelResult::fraction_at_least(int c) const {
  if (matches.empty()) return 0;
  return static_cast<double>(std::count_if(matches.begin(), matches.end(),
                                           [c](int m) { return m >= c; })) /
         matches.size();
}

double LevelResult::median() const {
  if (matches.empty()) return 0;
  auto v = matches;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

const LevelResult& MatrixResult::at(Distortion kind, int level) const {
  for (const auto& l : levels) {
    if (l.kind == kind && l.level == level) return l;
  }
  throw Error(Errc::kInvalidArgument, "level not in result");
}

double MatrixResult::unrelated_at_most(int k) const {
  if (unrelated.empty()) return 1;
  return static_cast<double>(std::count_if(unrelated.begin(), unrelated.end(),
                                           [k](int m) { return m <= k; })) /
         unrelated.size();
}

MatrixResult run_distortion_matrix(const std::vector<Image>& corpus, const MatrixConfig& config) {
  Rng rng(config.seed);
  auto dedup = config.dedup;
  dedup.rollover_capacity = std::max<std::uint64_t>(dedup.rollover_capacity, corpus.size() + 1);
  Index index(dedup, replay(seeds_from(rng, dedup.tables)));
  const auto& gen = index.newest();

  std::vector<DigestSet> originals;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    originals.push_back(digests_of(gen, extract_features(corpus[i])));
    index.insert(static_cast<ImageId>(i), originals.back());
  }

  MatrixResult result;
  result.tables = dedup.tables;
  result.threshold = dedup.threshold;
  for (auto kind : config.kinds) {
    for (int level = 0; level < level_count(kind); ++level) {
      LevelResult lr{kind, level, strength(kind, level), {}};
      // Noise draws are seeded per (kind, level) so each cell is reproducible on its own.
      Rng noise(config.seed ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(kind) * 16 + level + 1)));
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto v = extract_features(distort(corpus[i], kind, level, noise));
        auto shortlist = index.query({{gen.generation_id, digests_of(gen, v)}});
        int found = 0;
        for (const auto& e : shortlist) {
          if (e.image_id == i) found = e.collisions;
        }
        lr.matches.push_back(found);
      }
      result.levels.push_back(std::move(lr));
    }
  }

  for (std::size_t i = 0; i < originals.size(); ++i) {
    for (std::size_t j = i + 1; j < originals.size(); ++j) {
      int m = 0;
      for (std::size_t x = 0; x < originals[i].size(); ++x) m += originals[i][x] == originals[j][x];
      result.unrelated.push_back(m);
    }
  }
  return result;
}

void write_matrix(const MatrixResult& result, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream f(out_dir / "distortion_matrix.csv");
    f << "distortion,level,strength,matches,count,fraction\n";
    for (const auto& l : result.levels) {
      auto h = l.histogram(result.tables);
      for (std::size_t m = 0; m < h.size(); ++m) {
        f << name_of(l.kind) << ',' << l.level << ',' << fmt(l.strength) << ',' << m << ',' << h[m]
          << ',' << fmt(static_cast<double>(h[m]) / std::max<std::size_t>(1, l.matches.size()))
          << '\n';
      }
    }
  }
  {
    std::ofstream f(out_dir / "distortion_summary.csv");
    f << "distortion,level,strength,images,median_matches,fraction_at_threshold\n";
    for (const auto& l : result.levels) {
      f << name_of(l.kind) << ',' << l.level << ',' << fmt(l.strength) << ',' << l.matches.size()
        << ',' << fmt(l.median()) << ',' << fmt(l.fraction_at_least(result.threshold)) << '\n';
    }
  }
  {
    std::vector<std::size_t> h(static_cast<std::size_t>(result.tables) + 1, 0);
    for (int m : result.unrelated) ++h[static_cast<std::size_t>(m)];
    std::ofstream f(out_dir / "unrelated_pairs.csv");
    f << "matches,pairs,fraction\n";
    for (std::size_t m = 0; m < h.size(); ++m) {
      f << m << ',' << h[m] << ','
        << fmt(static_cast<double>(h[m]) / std::max<std::size_t>(1, result.unrelated.size())) << '\n';
    }
  }
  std::map<Distortion, std::pair<std::vector<std::string>, std::vector<std::vector<double>>>> per_kind;
  for (const auto& l : result.levels) {
    auto& [labels, cells] = per_kind[l.kind];
    labels.push_back(fmt(l.strength));
    auto h = l.histogram(result.tables);
    std::vector<double> row;
    for (auto c : h) row.push_back(static_cast<double>(c) / std::max<std::size_t>(1, l.matches.size()));
    cells.push_back(std::move(row));
  }
  for (const auto& [kind, data] : per_kind) {
    heatmap(out_dir / (std::string("matrix_") + name_of(kind) + ".svg"),
            std::string(name_of(kind)) + ": share of images by matching tables", data.first,
            data.second);
  }
}

// --- timing -------------------------------------------------------------

Stats summarize(std::vector<double> v) {
  Stats s;
  s.n = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  s.median = v.size() % 2 ? v[v.size() / 2] : (v[v.size() / 2 - 1] + v[v.size() / 2]) / 2;
  s.avg = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double var = 0;
  for (double x : v) var += (x - s.avg) * (x - s.avg);
  s.stddev = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0;
  return s;
}

double linear_r2(const std::vector<double>& x, const std::vector<double>& y, double* slope,
                 double* intercept) {
  const double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  double b = sxx > 0 ? sxy / sxx : 0;
  if (slope) *slope = b;
  if (intercept) *intercept = my - b * mx;
  return syy > 0 ? (sxy * sxy) / (sxx * syy) : 1;
}

TimingResult run_timing(const std::vector<FeatureVector>& vectors, const TimingConfig& config,
                        bool hash, bool index, bool query) {
  if (vectors.empty()) throw Error(Errc::kInvalidArgument, "timing needs feature vectors");
  TimingResult out;
  Rng rng(config.seed);
  const int dim = static_cast<int>(vectors.front().dim());

  if (hash) {
    std::vector<double> xs, ys;
    for (int t : config.tables) {
      for (int h : config.bits) {
        std::vector<LshParams> params;
        for (const auto& s : seeds_from(rng, t)) params.push_back(LshParams::generate(s, dim, h));
        std::vector<double> samples;
        for (int r = 0; r < config.hash_reps; ++r) {
          const auto& v = vectors[static_cast<std::size_t>(r) % vectors.size()];
          auto t0 = BenchClock::now();
          DigestSet d;
          for (const auto& p : params) d.push_back(slsh(p, v));
          samples.push_back(Ms(BenchClock::now() - t0).count());
        }
        auto st = summarize(samples);
        out.rows.push_back({"synthetic", "hash", t, h, 0, st});
        // Median: one preemption would swamp the mean of microsecond samples.
        xs.push_back(double(t) * h);
        ys.push_back(st.median);
      }
    }
    double slope = 0;
    out.hash_r2 = linear_r2(xs, ys, &slope);
    out.hash_slope_us = slope * 1000;
  }

  if (index || query) {
    DedupConfig dc = DedupConfig::with_defaults(config.query_tables, config.query_bits, dim);
    std::vector<double> avgs;
    for (std::size_t n : config.sizes) {
      dc.rollover_capacity = n + config.queries + 1;
      Index idx(dc, replay(seeds_from(rng, dc.tables)));
      const auto gen_id = idx.newest().generation_id;
      std::vector<DigestSet> stored;
      std::vector<double> inserts;
      inserts.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto d = i < vectors.size() ? digests_of(idx.newest(), vectors[i])
                                    : random_digests(rng, dc.tables);
        if (i % std::max<std::size_t>(1, n / 64) == 0) stored.push_back(d);
        auto t0 = BenchClock::now();
        idx.insert(static_cast<ImageId>(i), d);
        inserts.push_back(Ms(BenchClock::now() - t0).count());
      }
      if (index) out.rows.push_back({"synthetic", "index", dc.tables, dc.bits, n, summarize(inserts)});
      if (query) {
        std::vector<double> samples;
        if (n == config.sizes.front()) evict_caches();
        for (int q = 0; q < config.queries; ++q) {
          // Alternate hits on stored entries with misses.
          GenerationDigests gd{{gen_id, q % 2 ? stored[static_cast<std::size_t>(q) % stored.size()]
                                              : random_digests(rng, dc.tables)}};
          auto t0 = BenchClock::now();
          auto shortlist = idx.query(gd);
          auto decision = decide(shortlist, dc);
          samples.push_back(Ms(BenchClock::now() - t0).count());
          (void)decision;
        }
        if (n == config.sizes.front()) {
          out.cold_query_ms = samples.front();
          out.warm_query_ms = summarize({samples.begin() + 1, samples.end()}).avg;
        }
        auto st = summarize(samples);
        avgs.push_back(st.avg);
        out.rows.push_back({"synthetic", "query", dc.tables, dc.bits, n, st});
      }
    }
    if (!avgs.empty()) {
      out.query_flatness = *std::max_element(avgs.begin(), avgs.end()) /
                           std::max(1e-12, *std::min_element(avgs.begin(), avgs.end()));
    }
  }
  return out;
}

void write_timing(const TimingResult& result, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream f(out_dir / "timing.csv");
    f << "dataset,operation,tables,bits,index_size,n,min_ms,avg_ms,max_ms,median_ms,stddev_ms\n";
    for (const auto& r : result.rows) {
      f << r.dataset << ',' << r.operation << ',' << r.tables << ',' << r.bits << ','
        << r.index_size << ',' << r.stats.n << ',' << fmt(r.stats.min) << ',' << fmt(r.stats.avg)
        << ',' << fmt(r.stats.max) << ',' << fmt(r.stats.median) << ',' << fmt(r.stats.stddev)
        << '\n';
    }
  }
  {
    std::ofstream f(out_dir / "timing_summary.csv");
    f << "metric,value\n";
    f << "hash_linear_r2," << fmt(result.hash_r2) << '\n';
    f << "hash_slope_us_per_table_bit," << fmt(result.hash_slope_us) << '\n';
    f << "query_flatness_max_over_min," << fmt(result.query_flatness) << '\n';
    f << "cold_query_ms," << fmt(result.cold_query_ms) << '\n';
    f << "warm_query_avg_ms," << fmt(result.warm_query_ms) << '\n';
  }
  std::map<int, Series> hash_by_tables;
  Series idx{"index", {}, {}}, qry{"query", {}, {}};
  for (const auto& r : result.rows) {
    if (r.operation == "hash") {
      auto& s = hash_by_tables[r.tables];
      s.name = std::to_string(r.tables) + " tables";
      s.x.push_back(r.bits);
      s.y.push_back(r.stats.avg);
    } else if (r.operation == "index") {
      idx.x.push_back(static_cast<double>(r.index_size));
      idx.y.push_back(r.stats.avg);
    } else {
      qry.x.push_back(static_cast<double>(r.index_size));
      qry.y.push_back(r.stats.avg);
    }
  }
  if (!hash_by_tables.empty()) {
    std::vector<Series> s;
    for (auto& [t, series] : hash_by_tables) s.push_back(series);
    line_chart(out_dir / "timing_hash.svg", "Hash time by table count", "hash bits",
               "avg ms per image", s, false, false);
  }
  std::vector<Series> s;
  if (!idx.x.empty()) s.push_back(idx);
  if (!qry.x.empty()) s.push_back(qry);
  if (!s.empty()) {
    line_chart(out_dir / "timing_index_query.svg", "Per-operation time vs index size",
               "images indexed", "avg ms", s, true, true);
  }
}

// --- concurrency --------------------------------------------------------

namespace {

struct WorkerResult {
  bool ok = false;
  double ms = 0;
  ImageId ref = 0;
  std::string user;
  Bytes ciphertext;
};

}  // namespace

QosResult run_qos(const std::vector<FeatureVector>& vectors, const QosConfig& config) {
  if (vectors.empty()) throw Error(Errc::kInvalidArgument, "qos needs feature vectors");
  std::unique_ptr<server::ServerCore> core;
  std::unique_ptr<server::ServerRunner> runner;
  std::string address = config.server;
  if (address.empty()) {
    server::ServerConfig sc;
    sc.dedup = config.dedup;
    sc.burst = 1e6;
    sc.rate = 1e6;
    core = std::make_unique<server::ServerCore>(sc);
    runner = std::make_unique<server::ServerRunner>(*core);
    address = "127.0.0.1:" + std::to_string(runner->listen("127.0.0.1:0"));
  }

  proto::Params params;
  {
    auto conn = proto::tcp_connect(address);
    proto::ClientState st{"qos-setup", std::nullopt, {}, std::chrono::seconds(30)};
    params = proto::ensure_params(*conn, st);
  }
  std::vector<GenerationDigests> digests;
  for (const auto& v : vectors) digests.push_back(proto::digests_for(params, v));

  QosResult out;
  Rng rng(config.seed);
  std::uint64_t run = 0;
  auto run_level = [&](const std::string& workload, int n) {
    const bool indexing = workload == "index";
    const auto tag = rng.next();
    ++run;
    std::vector<WorkerResult> results(static_cast<std::size_t>(n));
    std::latch ready(n), go(1);
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      threads.emplace_back([&, i] {
        auto& res = results[static_cast<std::size_t>(i)];
        res.user = "qos-" + to_hex(std::span(reinterpret_cast<const std::uint8_t*>(&tag), 8)) +
                   "-" + std::to_string(i);
        proto::ConnectionPtr conn;
        try {
          conn = proto::tcp_connect(address, std::chrono::seconds(60));
        } catch (const Error&) {
        }
        ready.count_down();
        go.wait();
        if (!conn) return;
        auto deadline = std::chrono::seconds(120);
        try {
          auto t0 = BenchClock::now();
          conn->send(proto::UploadHashes{
              res.user, std::to_string(i),
              digests[static_cast<std::size_t>(i) % digests.size()]});
          auto reply = conn->receive_for(deadline);
          auto* r = reply ? std::get_if<proto::DedupResult>(&*reply) : nullptr;
          if (!r) return;
          if (indexing) {
            auto* u = std::get_if<proto::DedupUnique>(&r->outcome);
            if (!u) return;
            Bytes ct(config.ciphertext_bytes);
            for (std::size_t b = 0; b < ct.size(); ++b) ct[b] = static_cast<std::uint8_t>(b * 31 + i);
            conn->send(proto::UploadCt{u->upload_token, ct});
            auto ack = conn->receive_for(deadline);
            auto* a = ack ? std::get_if<proto::Ack>(&*ack) : nullptr;
            if (!a || a->ref != u->image_ref) return;
            res.ref = a->ref;
            res.ciphertext = std::move(ct);
          }
          res.ms = Ms(BenchClock::now() - t0).count();
          res.ok = true;
        } catch (const Error&) {
        }
        conn->close();
      });
    }
    ready.wait();
    auto t0 = BenchClock::now();
    go.count_down();
    for (auto& t : threads) t.join();
    QosRow row{workload, n, 0, Ms(BenchClock::now() - t0).count(), 0, 0};
    double sum = 0;
    for (const auto& r : results) {
      if (r.ok) {
        sum += r.ms;
      } else {
        ++row.failures;
      }
    }
    row.avg_ms = n > row.failures ? sum / (n - row.failures) : 0;
    if (indexing) {
      // Every acknowledged image must come back byte for byte.
      auto conn = proto::tcp_connect(address);
      for (const auto& r : results) {
        if (!r.ok) continue;
        conn->send(proto::Hello{r.user, false});
        conn->send(proto::FetchCt{r.ref});
        auto m = conn->receive_for(std::chrono::seconds(30));
        auto* ct = m ? std::get_if<proto::Ct>(&*m) : nullptr;
        bool indexed = !core || core->indexed(r.ref);
        if (ct && ct->ciphertext == r.ciphertext && indexed) ++row.verified;
      }
    }
    out.rows.push_back(row);
  };

  for (int n : config.levels) {
    if (config.indexing) run_level("index", n);
    if (config.queries) run_level("query", n);
  }
  if (runner) runner->stop();
  return out;
}

void write_qos(const QosResult& result, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir / "qos.csv");
  f << "workload,concurrency,failures,total_ms,avg_ms_per_request,verified\n";
  std::map<std::string, Series> avg, total;
  for (const auto& r : result.rows) {
    f << r.workload << ',' << r.concurrency << ',' << r.failures << ',' << fmt(r.total_ms) << ','
      << fmt(r.avg_ms) << ',' << r.verified << '\n';
    avg[r.workload].name = r.workload;
    avg[r.workload].x.push_back(r.concurrency);
    avg[r.workload].y.push_back(r.avg_ms);
    total[r.workload].name = r.workload;
    total[r.workload].x.push_back(r.concurrency);
    total[r.workload].y.push_back(r.total_ms);
  }
  std::vector<Series> a, t;
  for (auto& [_, s] : avg) a.push_back(s);
  for (auto& [_, s] : total) t.push_back(s);
  if (!a.empty()) {
    line_chart(out_dir / "qos_avg.svg", "Average time per request", "concurrent requests", "ms", a,
               true, true);
    line_chart(out_dir / "qos_total.svg", "Total time for all requests", "concurrent requests",
               "ms", t, true, true);
  }
}

}  // namespace sdedup::bench
