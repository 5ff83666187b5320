#include "hetpar/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "hetpar/rng.hpp"

namespace hetpar {

DatasetIndex build_index(const std::vector<std::string>& shard_paths) {
  DatasetIndex idx;
  for (const auto& p : shard_paths) {
    auto reader = std::make_shared<ShardReader>(p);
    if (!idx.shards.empty() && reader->schema() != idx.shards[0]->schema())
      throw config_error("shard " + p + " schema does not match " +
                         idx.shards[0]->path());
    idx.total += reader->count();
    idx.cumulative.push_back(idx.total);
    idx.shards.push_back(std::move(reader));
  }
  return idx;
}

std::pair<size_t, uint64_t> locate(const DatasetIndex& index, uint64_t g) {
  if (g >= index.total)
    throw index_error("global index " + std::to_string(g) +
                      " out of range (total " + std::to_string(index.total) +
                      ")");
  // First shard whose cumulative count exceeds g.
  auto it = std::upper_bound(index.cumulative.begin(), index.cumulative.end(),
                             g);
  size_t shard = static_cast<size_t>(it - index.cumulative.begin());
  uint64_t before = shard == 0 ? 0 : index.cumulative[shard - 1];
  return {shard, g - before};
}

Record read_global(const DatasetIndex& index, uint64_t g) {
  auto [shard, off] = locate(index, g);
  return index.shards[shard]->read(off);
}

std::vector<uint32_t> global_token_lengths(const DatasetIndex& index) {
  std::vector<uint32_t> out;
  out.reserve(index.total);
  for (const auto& s : index.shards) {
    const auto& t = s->token_lengths();
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

BatchPlan build_epoch_batches(const std::vector<uint32_t>& token_lengths,
                              size_t max_sentences, uint64_t max_tokens,
                              uint64_t base_seed, uint64_t epoch) {
  if (max_tokens > 0) {
    for (size_t i = 0; i < token_lengths.size(); ++i) {
      if (token_lengths[i] > max_tokens)
        throw config_error("instance " + std::to_string(i) + " has " +
                           std::to_string(token_lengths[i]) +
                           " tokens, exceeding max_tokens " +
                           std::to_string(max_tokens));
    }
  }

  std::vector<uint64_t> order(token_lengths.size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = derived_rng(base_seed, epoch);
  shuffle(order, rng);

  BatchPlan plan;
  plan.epoch = epoch;
  std::vector<uint64_t> cur;
  uint64_t cur_tokens = 0;
  for (uint64_t g : order) {
    uint64_t len = token_lengths[g];
    bool over_sentences = max_sentences > 0 && cur.size() + 1 > max_sentences;
    bool over_tokens = max_tokens > 0 && cur_tokens + len > max_tokens;
    if (!cur.empty() && (over_sentences || over_tokens)) {
      plan.batches.push_back(std::move(cur));
      cur.clear();
      cur_tokens = 0;
    }
    cur.push_back(g);
    cur_tokens += len;
  }
  if (!cur.empty()) plan.batches.push_back(std::move(cur));
  return plan;
}

std::vector<RankBatch> partition_for_rank(const BatchPlan& plan,
                                          size_t world_size, size_t rank) {
  if (world_size == 0) throw config_error("world_size must be >= 1");
  if (rank >= world_size)
    throw config_error("rank " + std::to_string(rank) +
                       " out of range for world_size " +
                       std::to_string(world_size));
  const uint64_t nbatches = plan.batches.size();
  if (nbatches == 0)
    throw config_error("epoch has no batches to partition");

  // A rank's first real batch backs its dummy rounds; a rank with no real
  // batch at all replays batch 0 (always a dummy, so only its shape is
  // used).
  uint64_t first_real = rank < nbatches ? rank : 0;
  uint64_t rounds = (nbatches + world_size - 1) / world_size;

  std::vector<RankBatch> out;
  out.reserve(rounds);
  for (uint64_t t = 0; t < rounds; ++t) {
    uint64_t i = t * world_size + rank;
    if (i < nbatches)
      out.push_back({i, false});
    else
      out.push_back({first_real, true});
  }
  return out;
}

}  // namespace hetpar
