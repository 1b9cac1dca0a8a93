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
#include <functional>
#include <map>
#include <optional>
#include <unordered_map>
#include <variant>
#include <vector>

#include "sdedup/slsh/slsh.hpp"

namespace sdedup {

using ImageId = std::uint64_t;
using GenerationId = std::uint32_t;

struct DedupConfig {
  int tables = 6;
  int bits = 24;
  int threshold = 4;
  std::uint64_t rollover_capacity = std::uint64_t{1} << 22;
  int dim = 160;

  // threshold = ceil((tables + 1) / 2), capacity = 2^(bits - 2).
  static DedupConfig with_defaults(int tables, int bits, int dim = 160);
  void validate() const;
};

// One digest per table, in table order.
using DigestSet = std::vector<SlshDigest>;
// Digests a client computed for each live generation.
using GenerationDigests = std::map<GenerationId, DigestSet>;

struct ShortlistEntry {
  ImageId image_id = 0;
  int collisions = 0;
  GenerationId generation_id = 0;

  friend bool operator==(const ShortlistEntry&, const ShortlistEntry&) = default;
};

struct Unique {};
struct Duplicate {
  ImageId image_id = 0;
  int collisions = 0;
};
using Decision = std::variant<Unique, Duplicate>;

// One full set of t tables sharing a creation time and parameter set.
struct TableGeneration {
  using Table = std::unordered_map<SlshDigest, std::vector<ImageId>, SlshDigestHash>;

  GenerationId generation_id = 0;
  std::vector<LshParams> params;
  std::vector<Table> tables;
  std::uint64_t created_at = 0;  // unix seconds
  std::vector<ImageId> order;    // insertion order

  std::uint64_t entry_count() const { return order.size(); }
};

// A generation with no entries, parameters generated from one seed per table.
TableGeneration empty_generation(const DedupConfig& config, GenerationId id,
                                 const std::vector<Seed>& seeds, std::uint64_t created_at);

// Snapshot codec ("SLSHIDX1"). Buckets are written in digest order so the
// encoding is canonical. Throws Error(kCorruptSnapshot) on any inconsistency.
Bytes encode_generation(const TableGeneration& generation);
TableGeneration decode_generation(ByteView bytes);

struct InsertResult {
  GenerationId generation_id = 0;
  // Set when this insert filled the generation and a new one was opened.
  std::optional<GenerationId> opened_generation;
};

// The t-table near-duplicate index. Not internally synchronized: const
// members may run concurrently with each other, mutations need exclusive
// access (the server wraps it in a reader-writer lock).
class Index {
 public:
  using SeedSource = std::function<Seed()>;

  explicit Index(DedupConfig config, SeedSource seeds = {});
  // Rebuilds from decoded generations (oldest first). An empty list starts a
  // fresh first generation.
  Index(DedupConfig config, std::vector<TableGeneration> generations, SeedSource seeds = {});

  const DedupConfig& config() const { return config_; }
  const std::vector<TableGeneration>& generations() const { return generations_; }
  const TableGeneration& newest() const { return generations_.back(); }
  const TableGeneration* generation(GenerationId id) const;
  bool contains(ImageId id) const { return location_.contains(id); }
  std::size_t size() const { return location_.size(); }

  // Inserts into the newest generation, then rolls over if it reached
  // capacity. Throws kDuplicateId, kWrongDigestCount.
  InsertResult insert(ImageId id, const DigestSet& digests);
  // Same, but targets an explicit (possibly older) generation.
  InsertResult insert_into(GenerationId generation, ImageId id, const DigestSet& digests);

  // Throws kMissingGeneration if any live generation has no digests.
  std::vector<ShortlistEntry> query(const GenerationDigests& digests) const;

  // Opens a new generation with fresh seeds.
  const TableGeneration& rollover();
  // Opens a generation with the given seeds (replay path).
  const TableGeneration& open_generation(GenerationId id, const std::vector<Seed>& seeds,
                                         std::uint64_t created_at);

  // SHA-256 over the canonical encoding of every generation.
  Digest32 state_digest() const;

 private:
  struct Location {
    std::size_t generation_index;
    std::size_t position;
  };

  TableGeneration make_generation(GenerationId id, const std::vector<Seed>& seeds,
                                  std::uint64_t created_at) const;

  DedupConfig config_;
  SeedSource seeds_;
  std::vector<TableGeneration> generations_;
  std::unordered_map<ImageId, Location> location_;
};

// Top shortlist entry if it reaches the threshold. The shortlist must be in
// query() order, so ties resolve to the earliest insertion.
Decision decide(const std::vector<ShortlistEntry>& shortlist, const DedupConfig& config);

}  // namespace sdedup
