#include <cstdio>
#include <thread>
#include <vector>

#include "doctest.h"
#include "hetpar/loader.hpp"
#include "test_util.hpp"

using namespace hetpar;
using hetpar_test::TempDir;

namespace {

std::vector<FieldSchema> schema() { return {{"tokens", Dtype::i64, 1}}; }

std::string make_shard(const TempDir& dir, const std::string& name,
                       int64_t base, size_t n) {
  std::vector<Record> recs;
  std::vector<uint32_t> lens;
  for (size_t i = 0; i < n; ++i) {
    Record r;
    r.fields.push_back(
        FieldValue::from_i64({base + static_cast<int64_t>(i)}));
    recs.push_back(std::move(r));
    lens.push_back(1);
  }
  std::string path = dir.file(name);
  write_shard(path, schema(), recs, lens);
  return path;
}

// Flattens a loaded sequence into comparable scalars.
std::vector<int64_t> drain(BatchLoader& loader, std::vector<uint64_t>* order,
                           std::vector<bool>* dummies) {
  std::vector<int64_t> vals;
  LoadedBatch b;
  while (loader.next(b)) {
    if (order) order->push_back(b.batch_index);
    if (dummies) dummies->push_back(b.dummy);
    for (const auto& rec : b.records)
      vals.push_back(rec.fields[0].as_i64()[0]);
  }
  return vals;
}

}  // namespace

TEST_CASE("loader: prefetch depth is invisible in the batch sequence") {
  TempDir dir;
  auto idx = build_index({make_shard(dir, "a.hsd", 0, 9),
                          make_shard(dir, "b.hsd", 100, 8)});
  auto lens = global_token_lengths(idx);
  auto plan = build_epoch_batches(lens, 3, 0, 5, 0);
  auto sched = partition_for_rank(plan, 2, 1);

  std::vector<int64_t> seqs[3];
  std::vector<uint64_t> orders[3];
  size_t depths[3] = {0, 2, 4};
  for (int i = 0; i < 3; ++i) {
    LoaderOptions opts;
    opts.prefetch_depth = depths[i];
    BatchLoader loader(idx, plan, sched, opts);
    seqs[i] = drain(loader, &orders[i], nullptr);
  }
  CHECK(seqs[0] == seqs[1]);
  CHECK(seqs[0] == seqs[2]);
  CHECK(orders[0] == orders[1]);
  CHECK(orders[0] == orders[2]);
}

TEST_CASE("loader: exhausts to exactly the partitioned count, then signals") {
  TempDir dir;
  auto idx = build_index({make_shard(dir, "a.hsd", 0, 10)});
  auto plan = build_epoch_batches(global_token_lengths(idx), 3, 0, 1, 0);
  REQUIRE(plan.batches.size() == 4);  // 3+3+3+1
  auto sched = partition_for_rank(plan, 3, 2);
  REQUIRE(sched.size() == 2);  // ceil(4/3) rounds, second is a dummy

  LoaderOptions opts;
  opts.prefetch_depth = 2;
  BatchLoader loader(idx, plan, sched, opts);
  LoadedBatch b;
  CHECK(loader.next(b));
  CHECK(!b.dummy);
  CHECK(loader.next(b));
  CHECK(b.dummy);
  CHECK(b.batch_index == 2);  // dummy replays the rank's first real batch
  CHECK(!loader.next(b));
  CHECK(!loader.next(b));  // end signal is stable
}

TEST_CASE("loader: tiny cache alternating between shards stays correct") {
  TempDir dir;
  auto idx = build_index({make_shard(dir, "a.hsd", 0, 6),
                          make_shard(dir, "b.hsd", 100, 6)});
  auto plan = build_epoch_batches(global_token_lengths(idx), 2, 0, 9, 0);
  auto sched = partition_for_rank(plan, 1, 0);

  LoaderOptions none;
  none.prefetch_depth = 0;
  BatchLoader plain(idx, plan, sched, none);
  auto expect = drain(plain, nullptr, nullptr);

  LoaderOptions tiny;
  tiny.prefetch_depth = 0;
  tiny.cache_bytes = 16;  // one 12-byte record at a time
  for (auto policy : {CachePolicy::lru, CachePolicy::lfu}) {
    tiny.cache_policy = policy;
    BatchLoader cached(idx, plan, sched, tiny);
    CHECK(drain(cached, nullptr, nullptr) == expect);
  }
}

TEST_CASE("loader: dummy rounds re-serve their batch from the cache") {
  TempDir dir;
  auto idx = build_index({make_shard(dir, "a.hsd", 0, 3)});
  auto plan = build_epoch_batches(global_token_lengths(idx), 1, 0, 1, 0);
  REQUIRE(plan.batches.size() == 3);
  // World 2, rank 1: one real batch then a dummy replaying it.
  auto sched = partition_for_rank(plan, 2, 1);
  REQUIRE(sched.size() == 2);
  REQUIRE(sched[1].dummy);
  REQUIRE(sched[1].batch_index == sched[0].batch_index);

  LoaderOptions opts;
  opts.prefetch_depth = 0;
  opts.cache_bytes = 1 << 16;
  BatchLoader loader(idx, plan, sched, opts);
  LoadedBatch a, b;
  REQUIRE(loader.next(a));
  REQUIRE(loader.next(b));
  CHECK(a.records[0].fields[0].bytes == b.records[0].fields[0].bytes);
  CHECK(loader.cache().hits() >= 1);
}

TEST_CASE("cache: lru and lfu evict different victims") {
  // Two 10-byte entries fit. Access A,A,B then insert C: A is frequent but
  // stale, B is fresh but rare. LRU evicts A; LFU evicts B.
  Record rec;
  rec.fields.push_back(FieldValue::from_i64({7}));

  RecordCache lru(20, CachePolicy::lru);
  lru.put(1, rec, 10);
  CHECK(lru.get(1).has_value());  // A freq 2
  lru.put(2, rec, 10);            // B freq 1, newer
  lru.put(3, rec, 10);            // evicts A (least recently used)
  CHECK(!lru.get(1).has_value());
  CHECK(lru.get(2).has_value());
  CHECK(lru.get(3).has_value());

  RecordCache lfu(20, CachePolicy::lfu);
  lfu.put(1, rec, 10);
  CHECK(lfu.get(1).has_value());  // A freq 2
  lfu.put(2, rec, 10);            // B freq 1
  lfu.put(3, rec, 10);            // evicts B (least frequently used)
  CHECK(lfu.get(1).has_value());
  CHECK(!lfu.get(2).has_value());
  CHECK(lfu.get(3).has_value());
}

TEST_CASE("cache: oversized records bypass, capacity 0 disables") {
  Record rec;
  rec.fields.push_back(FieldValue::from_i64({7}));
  RecordCache small(8, CachePolicy::lru);
  small.put(1, rec, 100);
  CHECK(!small.get(1).has_value());

  RecordCache off(0, CachePolicy::lru);
  off.put(1, rec, 1);
  CHECK(!off.get(1).has_value());
  CHECK(off.hits() == 0);
  CHECK(off.misses() == 0);  // disabled cache does not even count
}

TEST_CASE("loader: two loaders drain concurrently without interference") {
  TempDir dir;
  auto idx = build_index({make_shard(dir, "a.hsd", 0, 20),
                          make_shard(dir, "b.hsd", 100, 20)});
  auto plan = build_epoch_batches(global_token_lengths(idx), 4, 0, 3, 0);

  std::vector<int64_t> got[2];
  std::vector<std::thread> threads;
  for (size_t r = 0; r < 2; ++r) {
    threads.emplace_back([&, r] {
      LoaderOptions opts;
      opts.prefetch_depth = 2;
      opts.cache_bytes = 64;
      BatchLoader loader(idx, plan, partition_for_rank(plan, 2, r), opts);
      got[r] = drain(loader, nullptr, nullptr);
    });
  }
  for (auto& t : threads) t.join();

  for (size_t r = 0; r < 2; ++r) {
    LoaderOptions opts;
    opts.prefetch_depth = 0;
    BatchLoader loader(idx, plan, partition_for_rank(plan, 2, r), opts);
    CHECK(drain(loader, nullptr, nullptr) == got[r]);
  }
}

TEST_CASE("loader: read failure mid-stream surfaces as io_error") {
  TempDir dir;
  std::string path = make_shard(dir, "gone.hsd", 0, 4);
  auto idx = build_index({path});
  auto plan = build_epoch_batches(global_token_lengths(idx), 2, 0, 1, 0);
  auto sched = partition_for_rank(plan, 1, 0);
  std::remove(path.c_str());

  LoaderOptions sync;
  sync.prefetch_depth = 0;
  BatchLoader a(idx, plan, sched, sync);
  LoadedBatch b;
  CHECK_THROWS_AS(a.next(b), io_error);

  LoaderOptions pre;
  pre.prefetch_depth = 2;
  BatchLoader c(idx, plan, sched, pre);
  CHECK_THROWS_AS(c.next(b), io_error);

  BatchPlan plan2 = plan;
  auto bad = sched;
  bad[0].batch_index = 99;
  CHECK_THROWS_AS(BatchLoader(idx, plan2, bad, sync), config_error);
}
