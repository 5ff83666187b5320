#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hetpar/shard.hpp"

namespace hetpar {

// Global view over an ordered shard list. cumulative[i] is the number of
// records in shards 0..i; locate() maps a global index back to its shard.
struct DatasetIndex {
  std::vector<std::shared_ptr<ShardReader>> shards;
  std::vector<uint64_t> cumulative;
  uint64_t total = 0;
};

// Opens every shard, checks schema compatibility, builds the prefix sums.
DatasetIndex build_index(const std::vector<std::string>& shard_paths);

// Binary search over the cumulative table; returns (shard id, offset).
std::pair<size_t, uint64_t> locate(const DatasetIndex& index, uint64_t g);

Record read_global(const DatasetIndex& index, uint64_t g);

// Token lengths for all records in global order, read from shard footers.
std::vector<uint32_t> global_token_lengths(const DatasetIndex& index);

// One epoch of batches over global indices. Batches partition [0,total).
struct BatchPlan {
  uint64_t epoch = 0;
  std::vector<std::vector<uint64_t>> batches;
};

// Shuffles [0,total) with the RNG seeded base_seed+epoch, then packs
// greedily in shuffled order: a batch closes when adding the next instance
// would exceed max_sentences or max_tokens (0 disables a cap).
BatchPlan build_epoch_batches(const std::vector<uint32_t>& token_lengths,
                              size_t max_sentences, uint64_t max_tokens,
                              uint64_t base_seed, uint64_t epoch);

// One entry of a rank's schedule. A dummy round replays batch_index with
// weight 0 and zero gradient so every rank joins every collective.
struct RankBatch {
  uint64_t batch_index = 0;
  bool dummy = false;
};

// Rank r takes batches with index == r (mod world_size); rounds where r has
// no batch become dummies pointing at the rank's first real batch, or at
// batch 0 for a rank with no real batches at all.
std::vector<RankBatch> partition_for_rank(const BatchPlan& plan,
                                          size_t world_size, size_t rank);

}  // namespace hetpar
