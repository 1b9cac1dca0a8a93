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

#include "sdedup/index/index.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>

#include "sdedup/common/hash.hpp"

namespace sdedup {
namespace {

constexpr char kMagic[8] = {'S', 'L', 'S', 'H', 'I', 'D', 'X', '1'};

std::uint64_t unix_now() {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::seconds>(
                                        std::chrono::system_clock::now().time_since_epoch())
                                        .count());
}

Seed random_seed() { return random_array<32>(); }

}  // namespace

DedupConfig DedupConfig::with_defaults(int tables, int bits, int dim) {
  DedupConfig c;
  c.tables = tables;
  c.bits = bits;
  c.threshold = (tables + 2) / 2;
  c.rollover_capacity = bits >= 2 ? std::uint64_t{1} << (bits - 2) : 1;
  c.dim = dim;
  return c;
}

void DedupConfig::validate() const {
  if (tables < 1) throw Error(Errc::kInvalidArgument, "need at least one table");
  if (threshold < 1 || threshold > tables) {
    throw Error(Errc::kInvalidArgument, "threshold must satisfy 1 <= c <= t");
  }
  if (bits < LshParams::kMinBits || bits > LshParams::kMaxBits) {
    throw Error(Errc::kBadDimensions, "hash bits out of range");
  }
  if (rollover_capacity == 0) throw Error(Errc::kInvalidArgument, "rollover capacity is zero");
  if (dim < 2) throw Error(Errc::kBadDimensions, "dim < 2");
}

Bytes encode_generation(const TableGeneration& g) {
  ByteWriter w;
  w.raw(std::string_view(kMagic, sizeof kMagic));
  w.u32(g.generation_id);
  w.u32(static_cast<std::uint32_t>(g.tables.size()));
  w.u32(static_cast<std::uint32_t>(g.params.empty() ? 0 : g.params.front().bits()));
  for (const auto& p : g.params) p.encode_to(w);
  w.u64(g.created_at);
  for (const auto& table : g.tables) {
    std::vector<const TableGeneration::Table::value_type*> buckets;
    buckets.reserve(table.size());
    for (const auto& kv : table) buckets.push_back(&kv);
    std::sort(buckets.begin(), buckets.end(),
              [](const auto* a, const auto* b) { return a->first < b->first; });
    w.u32(static_cast<std::uint32_t>(buckets.size()));
    for (const auto* kv : buckets) {
      w.raw(kv->first.bytes());
      w.u32(static_cast<std::uint32_t>(kv->second.size()));
      for (ImageId id : kv->second) w.u64(id);
    }
  }
  w.u64(g.order.size());
  for (ImageId id : g.order) w.u64(id);
  auto body = std::move(w).take();
  auto check = sha256(body);
  body.insert(body.end(), check.begin(), check.end());
  return body;
}

TableGeneration decode_generation(ByteView bytes) {
  if (bytes.size() < sizeof kMagic + 32) throw Error(Errc::kCorruptSnapshot, "snapshot too short");
  auto body = bytes.first(bytes.size() - 32);
  if (!ct_equal(sha256(body), bytes.last(32))) {
    throw Error(Errc::kCorruptSnapshot, "snapshot checksum mismatch");
  }
  ByteReader r(body, Errc::kCorruptSnapshot);
  if (std::memcmp(r.raw(sizeof kMagic).data(), kMagic, sizeof kMagic) != 0) {
    throw Error(Errc::kCorruptSnapshot, "bad magic");
  }
  TableGeneration g;
  g.generation_id = r.u32();
  const std::uint32_t t = r.u32();
  const std::uint32_t h = r.u32();
  if (t == 0 || t > 1024) throw Error(Errc::kCorruptSnapshot, "bad table count");
  for (std::uint32_t x = 0; x < t; ++x) {
    try {
      g.params.push_back(LshParams::decode(r));
    } catch (const Error& e) {
      throw Error(Errc::kCorruptSnapshot, e.what());
    }
    if (static_cast<std::uint32_t>(g.params.back().bits()) != h) {
      throw Error(Errc::kCorruptSnapshot, "params disagree with header bits");
    }
  }
  g.created_at = r.u64();
  g.tables.resize(t);
  std::vector<std::unordered_map<ImageId, int>> seen(t);
  for (std::uint32_t x = 0; x < t; ++x) {
    const std::uint32_t buckets = r.u32();
    for (std::uint32_t b = 0; b < buckets; ++b) {
      SlshDigest d(r.fixed<32>());
      const std::uint32_t n = r.u32();
      if (n == 0 || n > r.remaining() / 8) throw Error(Errc::kCorruptSnapshot, "bad bucket size");
      auto& bucket = g.tables[x][d];
      if (!bucket.empty()) throw Error(Errc::kCorruptSnapshot, "repeated bucket");
      for (std::uint32_t i = 0; i < n; ++i) {
        ImageId id = r.u64();
        bucket.push_back(id);
        if (++seen[x][id] != 1) throw Error(Errc::kCorruptSnapshot, "id repeated within a table");
      }
    }
  }
  const std::uint64_t entries = r.u64();
  if (entries > r.remaining() / 8) throw Error(Errc::kCorruptSnapshot, "bad entry count");
  for (std::uint64_t i = 0; i < entries; ++i) g.order.push_back(r.u64());
  r.expect_done();
  for (const auto& table_ids : seen) {
    if (table_ids.size() != g.order.size()) {
      throw Error(Errc::kCorruptSnapshot, "table membership disagrees with insertion log");
    }
    for (ImageId id : g.order) {
      if (!table_ids.contains(id)) throw Error(Errc::kCorruptSnapshot, "id missing from a table");
    }
  }
  return g;
}

Index::Index(DedupConfig config, SeedSource seeds) : Index(config, {}, std::move(seeds)) {}

Index::Index(DedupConfig config, std::vector<TableGeneration> generations, SeedSource seeds)
    : config_(config), seeds_(seeds ? std::move(seeds) : SeedSource(random_seed)) {
  config_.validate();
  generations_ = std::move(generations);
  for (std::size_t gi = 0; gi < generations_.size(); ++gi) {
    const auto& g = generations_[gi];
    if (g.tables.size() != static_cast<std::size_t>(config_.tables) ||
        g.params.size() != g.tables.size()) {
      throw Error(Errc::kCorruptSnapshot, "generation table count differs from config");
    }
    for (const auto& p : g.params) {
      if (p.bits() != config_.bits || p.dim() != config_.dim) {
        throw Error(Errc::kCorruptSnapshot, "generation params differ from config");
      }
    }
    if (gi > 0 && g.generation_id <= generations_[gi - 1].generation_id) {
      throw Error(Errc::kCorruptSnapshot, "generations out of order");
    }
    for (std::size_t pos = 0; pos < g.order.size(); ++pos) {
      if (!location_.emplace(g.order[pos], Location{gi, pos}).second) {
        throw Error(Errc::kCorruptSnapshot, "image indexed in two generations");
      }
    }
  }
  if (generations_.empty()) rollover();
}

const TableGeneration* Index::generation(GenerationId id) const {
  for (const auto& g : generations_) {
    if (g.generation_id == id) return &g;
  }
  return nullptr;
}

TableGeneration Index::make_generation(GenerationId id, const std::vector<Seed>& seeds,
                                       std::uint64_t created_at) const {
  return empty_generation(config_, id, seeds, created_at);
}

TableGeneration empty_generation(const DedupConfig& config, GenerationId id,
                                 const std::vector<Seed>& seeds, std::uint64_t created_at) {
  if (seeds.size() != static_cast<std::size_t>(config.tables)) {
    throw Error(Errc::kWrongDigestCount, "need one seed per table");
  }
  TableGeneration g;
  g.generation_id = id;
  g.created_at = created_at;
  for (const auto& s : seeds) g.params.push_back(LshParams::generate(s, config.dim, config.bits));
  g.tables.resize(seeds.size());
  return g;
}

const TableGeneration& Index::rollover() {
  std::vector<Seed> seeds;
  for (int x = 0; x < config_.tables; ++x) seeds.push_back(seeds_());
  GenerationId next = generations_.empty() ? 1 : generations_.back().generation_id + 1;
  return open_generation(next, seeds, unix_now());
}

const TableGeneration& Index::open_generation(GenerationId id, const std::vector<Seed>& seeds,
                                              std::uint64_t created_at) {
  if (!generations_.empty() && id <= generations_.back().generation_id) {
    throw Error(Errc::kInvalidArgument, "generation ids must increase");
  }
  generations_.push_back(make_generation(id, seeds, created_at));
  return generations_.back();
}

InsertResult Index::insert(ImageId id, const DigestSet& digests) {
  return insert_into(newest().generation_id, id, digests);
}

InsertResult Index::insert_into(GenerationId generation_id, ImageId id, const DigestSet& digests) {
  if (digests.size() != static_cast<std::size_t>(config_.tables)) {
    throw Error(Errc::kWrongDigestCount, "expected one digest per table");
  }
  if (location_.contains(id)) throw Error(Errc::kDuplicateId, "image already indexed");
  std::size_t gi = generations_.size();
  for (std::size_t i = 0; i < generations_.size(); ++i) {
    if (generations_[i].generation_id == generation_id) gi = i;
  }
  if (gi == generations_.size()) throw Error(Errc::kMissingGeneration, "unknown generation");
  auto& g = generations_[gi];
  for (std::size_t x = 0; x < digests.size(); ++x) g.tables[x][digests[x]].push_back(id);
  location_.emplace(id, Location{gi, g.order.size()});
  g.order.push_back(id);

  InsertResult result{generation_id, std::nullopt};
  if (gi + 1 == generations_.size() && g.entry_count() >= config_.rollover_capacity) {
    result.opened_generation = rollover().generation_id;
  }
  return result;
}

std::vector<ShortlistEntry> Index::query(const GenerationDigests& digests) const {
  std::vector<ShortlistEntry> out;
  for (const auto& g : generations_) {
    auto it = digests.find(g.generation_id);
    if (it == digests.end()) {
      throw Error(Errc::kMissingGeneration,
                  "no digests for generation " + std::to_string(g.generation_id));
    }
    if (it->second.size() != g.tables.size()) {
      throw Error(Errc::kWrongDigestCount, "expected one digest per table");
    }
    std::unordered_map<ImageId, int> counts;
    for (std::size_t x = 0; x < g.tables.size(); ++x) {
      auto bucket = g.tables[x].find(it->second[x]);
      if (bucket == g.tables[x].end()) continue;
      for (ImageId id : bucket->second) ++counts[id];
    }
    for (const auto& [id, n] : counts) out.push_back({id, n, g.generation_id});
  }
  std::sort(out.begin(), out.end(), [this](const ShortlistEntry& a, const ShortlistEntry& b) {
    if (a.collisions != b.collisions) return a.collisions > b.collisions;
    const auto& la = location_.at(a.image_id);
    const auto& lb = location_.at(b.image_id);
    if (la.generation_index != lb.generation_index) return la.generation_index < lb.generation_index;
    return la.position < lb.position;
  });
  return out;
}

Digest32 Index::state_digest() const {
  Sha256 h;
  for (const auto& g : generations_) h.update(encode_generation(g));
  return h.finish();
}

Decision decide(const std::vector<ShortlistEntry>& shortlist, const DedupConfig& config) {
  if (shortlist.empty() || shortlist.front().collisions < config.threshold) return Unique{};
  return Duplicate{shortlist.front().image_id, shortlist.front().collisions};
}

}  // namespace sdedup
