#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "hetpar/dataset.hpp"
#include "hetpar/rng.hpp"
#include "hetpar/shard.hpp"
#include "test_util.hpp"

using namespace hetpar;
using hetpar_test::TempDir;

namespace {

std::vector<FieldSchema> toy_schema() {
  return {{"tokens", Dtype::i64, 1},
          {"features", Dtype::f64, 1},
          {"label", Dtype::i64, 1}};
}

Record toy_record(int64_t base) {
  Record r;
  r.fields.push_back(FieldValue::from_i64({base, base + 1, base + 2}));
  r.fields.push_back(FieldValue::from_f64({0.5 * static_cast<double>(base)}));
  r.fields.push_back(FieldValue::from_i64({base % 3}));
  return r;
}

// Writes a shard of n sequential toy records starting at value base.
std::string toy_shard(const TempDir& dir, const std::string& name, int64_t base,
                      size_t n) {
  std::vector<Record> recs;
  std::vector<uint32_t> lens;
  for (size_t i = 0; i < n; ++i) {
    recs.push_back(toy_record(base + static_cast<int64_t>(i)));
    lens.push_back(3);
  }
  std::string path = dir.file(name);
  write_shard(path, toy_schema(), recs, lens);
  return path;
}

}  // namespace

TEST_CASE("shard: write then read is byte identity") {
  TempDir dir;
  std::vector<Record> recs = {toy_record(10), toy_record(20), toy_record(30)};
  std::string path = dir.file("a.hsd");
  write_shard(path, toy_schema(), recs, {3, 3, 3});

  ShardReader reader(path);
  CHECK(reader.count() == 3);
  CHECK(reader.schema() == toy_schema());
  CHECK(reader.token_lengths() == std::vector<uint32_t>{3, 3, 3});
  for (size_t i = 0; i < 3; ++i) {
    Record got = reader.read(i);
    REQUIRE(got.fields.size() == recs[i].fields.size());
    for (size_t fi = 0; fi < got.fields.size(); ++fi) {
      CHECK(got.fields[fi].dims == recs[i].fields[fi].dims);
      CHECK(got.fields[fi].bytes == recs[i].fields[fi].bytes);
    }
  }
  CHECK(reader.read(0).fields[0].as_i64() == std::vector<int64_t>{10, 11, 12});
}

TEST_CASE("shard: empty record list is a valid shard with count 0") {
  TempDir dir;
  std::string path = dir.file("empty.hsd");
  write_shard(path, toy_schema(), {}, {});
  ShardReader reader(path);
  CHECK(reader.count() == 0);
  CHECK_THROWS_AS(reader.read(0), index_error);
}

TEST_CASE("shard: random access equals sequential scan on 10k records") {
  TempDir dir;
  std::string path = toy_shard(dir, "big.hsd", 0, 10000);
  ShardReader reader(path);
  REQUIRE(reader.count() == 10000);

  CHECK(reader.read(9999).fields[0].as_i64() ==
        std::vector<int64_t>{9999, 10000, 10001});
  SeededRng rng(99);
  for (int k = 0; k < 50; ++k) {
    size_t i = rng.bounded(10000);
    auto tok = reader.read(i).fields[0].as_i64();
    CHECK(tok[0] == static_cast<int64_t>(i));
  }
}

TEST_CASE("shard: corrupt headers and bad indices are rejected") {
  TempDir dir;
  std::string path = toy_shard(dir, "c.hsd", 0, 2);

  ShardReader ok(path);
  CHECK_THROWS_AS(ok.read(2), index_error);

  auto bytes = read_file(path);
  auto mangled = bytes;
  mangled[0] = 'X';
  write_file_atomic(dir.file("badmagic.hsd"), mangled);
  CHECK_THROWS_AS(ShardReader(dir.file("badmagic.hsd")), io_error);

  mangled = bytes;
  mangled[4] = 0x77;  // version word
  write_file_atomic(dir.file("badver.hsd"), mangled);
  CHECK_THROWS_AS(ShardReader(dir.file("badver.hsd")), io_error);

  std::vector<uint8_t> truncated(bytes.begin(), bytes.begin() + 40);
  write_file_atomic(dir.file("trunc.hsd"), truncated);
  CHECK_THROWS_AS(ShardReader(dir.file("trunc.hsd")), io_error);

  CHECK_THROWS_AS(ShardReader(dir.file("missing.hsd")), io_error);
}

TEST_CASE("shard: writer validates schema agreement") {
  TempDir dir;
  Record bad;
  bad.fields.push_back(FieldValue::from_i64({1}));
  CHECK_THROWS_AS(write_shard(dir.file("x.hsd"), toy_schema(), {bad}, {1}),
                  config_error);
  CHECK_THROWS_AS(
      write_shard(dir.file("y.hsd"), toy_schema(), {toy_record(1)}, {}),
      config_error);
}

TEST_CASE("index: prefix sums and totals") {
  TempDir dir;
  auto idx = build_index({toy_shard(dir, "s0.hsd", 0, 3),
                          toy_shard(dir, "s1.hsd", 100, 2),
                          toy_shard(dir, "s2.hsd", 200, 4)});
  CHECK(idx.cumulative == std::vector<uint64_t>{3, 5, 9});
  CHECK(idx.total == 9);

  auto single = build_index({toy_shard(dir, "s3.hsd", 0, 7)});
  CHECK(single.cumulative == std::vector<uint64_t>{7});
  CHECK(single.total == 7);
}

TEST_CASE("index: 50 random shards sum their individually read counts") {
  TempDir dir;
  SeededRng rng(4);
  std::vector<std::string> paths;
  uint64_t expect = 0;
  for (int i = 0; i < 50; ++i) {
    size_t n = rng.bounded(6);
    expect += n;
    paths.push_back(toy_shard(dir, "r" + std::to_string(i) + ".hsd", 0, n));
  }
  auto idx = build_index(paths);
  CHECK(idx.total == expect);
  uint64_t manual = 0;
  for (const auto& p : paths) manual += ShardReader(p).count();
  CHECK(manual == expect);
}

TEST_CASE("index: schema mismatch across shards is rejected") {
  TempDir dir;
  std::string a = toy_shard(dir, "a.hsd", 0, 2);
  std::vector<FieldSchema> other = {{"tokens", Dtype::i64, 1}};
  Record r;
  r.fields.push_back(FieldValue::from_i64({1, 2}));
  std::string b = dir.file("b.hsd");
  write_shard(b, other, {r}, {2});
  CHECK_THROWS_AS(build_index({a, b}), config_error);
}

TEST_CASE("locate: hand-checked cases and boundaries") {
  TempDir dir;
  auto idx = build_index({toy_shard(dir, "s0.hsd", 0, 3),
                          toy_shard(dir, "s1.hsd", 100, 2),
                          toy_shard(dir, "s2.hsd", 200, 4)});
  CHECK(locate(idx, 4) == std::pair<size_t, uint64_t>{1, 1});
  CHECK(locate(idx, 0) == std::pair<size_t, uint64_t>{0, 0});
  CHECK(locate(idx, 8) == std::pair<size_t, uint64_t>{2, 3});
  CHECK_THROWS_AS(locate(idx, 9), index_error);

  // Empty shard in the middle: cumulative stays flat and locate skips it.
  auto gap = build_index({toy_shard(dir, "g0.hsd", 0, 2),
                          toy_shard(dir, "g1.hsd", 0, 0),
                          toy_shard(dir, "g2.hsd", 50, 3)});
  CHECK(gap.cumulative == std::vector<uint64_t>{2, 2, 5});
  CHECK(locate(gap, 2) == std::pair<size_t, uint64_t>{2, 0});
}

TEST_CASE("locate: every global index equals the flat concatenated scan") {
  TempDir dir;
  std::vector<std::string> paths;
  std::vector<int64_t> flat;  // first token of each record in write order
  SeededRng rng(5);
  for (int i = 0; i < 8; ++i) {
    size_t n = rng.bounded(5);
    int64_t base = 1000 * i;
    paths.push_back(toy_shard(dir, "f" + std::to_string(i) + ".hsd", base, n));
    for (size_t k = 0; k < n; ++k)
      flat.push_back(base + static_cast<int64_t>(k));
  }
  auto idx = build_index(paths);
  REQUIRE(idx.total == flat.size());
  for (uint64_t g = 0; g < idx.total; ++g)
    CHECK(read_global(idx, g).fields[0].as_i64()[0] == flat[g]);
  CHECK(global_token_lengths(idx) ==
        std::vector<uint32_t>(idx.total, 3));
}

TEST_CASE("batches: five instances with max_sentences=2 pack as [2,2,1]") {
  std::vector<uint32_t> lens(5, 1);
  auto plan = build_epoch_batches(lens, 2, 0, 42, 0);
  REQUIRE(plan.batches.size() == 3);
  CHECK(plan.batches[0].size() == 2);
  CHECK(plan.batches[1].size() == 2);
  CHECK(plan.batches[2].size() == 1);
}

TEST_CASE("batches: token cap closes batches, [5,5,5] at 10 packs as [2,1]") {
  std::vector<uint32_t> lens = {5, 5, 5};
  auto plan = build_epoch_batches(lens, 10, 10, 7, 0);
  REQUIRE(plan.batches.size() == 2);
  CHECK(plan.batches[0].size() == 2);
  CHECK(plan.batches[1].size() == 1);
}

TEST_CASE("batches: deterministic in (seed, epoch), reshuffled across epochs") {
  std::vector<uint32_t> lens(40, 2);
  auto a = build_epoch_batches(lens, 4, 0, 42, 3);
  auto b = build_epoch_batches(lens, 4, 0, 42, 3);
  CHECK(a.batches == b.batches);
  auto c = build_epoch_batches(lens, 4, 0, 42, 4);
  CHECK(a.batches != c.batches);
  auto d = build_epoch_batches(lens, 4, 0, 41, 3);
  CHECK(a.batches != d.batches);

  // Seed arithmetic: seed S, epoch N draws the same shuffle as S+N, 0.
  auto e = build_epoch_batches(lens, 4, 0, 45, 0);
  CHECK(a.batches == e.batches);
}

TEST_CASE("batches: oversized single instance is a configuration error") {
  std::vector<uint32_t> lens = {4, 11, 2};
  CHECK_THROWS_AS(build_epoch_batches(lens, 0, 10, 1, 0), config_error);
  CHECK_NOTHROW(build_epoch_batches(lens, 0, 0, 1, 0));  // cap disabled
}

TEST_CASE("batches: caps hold and indices partition, random configs") {
  SeededRng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    size_t n = 1 + rng.bounded(200);
    std::vector<uint32_t> lens;
    for (size_t i = 0; i < n; ++i)
      lens.push_back(1 + static_cast<uint32_t>(rng.bounded(9)));
    size_t max_s = 1 + rng.bounded(8);
    uint64_t max_t = 10 + rng.bounded(30);
    auto plan = build_epoch_batches(lens, max_s, max_t, trial, 0);

    std::set<uint64_t> seen;
    for (const auto& b : plan.batches) {
      REQUIRE(!b.empty());
      CHECK(b.size() <= max_s);
      uint64_t toks = 0;
      for (uint64_t g : b) {
        toks += lens[g];
        CHECK(seen.insert(g).second);  // no duplicates
      }
      CHECK(toks <= max_t);
    }
    CHECK(seen.size() == n);  // every instance appears
  }
}

TEST_CASE("partition: three batches over world 4 leave rank 3 a dummy") {
  BatchPlan plan;
  plan.batches = {{0}, {1}, {2}};
  for (size_t r = 0; r < 3; ++r) {
    auto mine = partition_for_rank(plan, 4, r);
    REQUIRE(mine.size() == 1);
    CHECK(mine[0].batch_index == r);
    CHECK(!mine[0].dummy);
  }
  auto r3 = partition_for_rank(plan, 4, 3);
  REQUIRE(r3.size() == 1);
  CHECK(r3[0].dummy);
  CHECK(r3[0].batch_index == 0);  // no real batch, replay global batch 0
}

TEST_CASE("partition: world 1 takes everything with no dummies") {
  BatchPlan plan;
  plan.batches.assign(7, {0});
  auto mine = partition_for_rank(plan, 1, 0);
  REQUIRE(mine.size() == 7);
  for (size_t i = 0; i < 7; ++i) {
    CHECK(mine[i].batch_index == i);
    CHECK(!mine[i].dummy);
  }
}

TEST_CASE("partition: 10 batches over world 4 give counts [3,3,2,2]") {
  BatchPlan plan;
  plan.batches.assign(10, {0});
  size_t real_counts[4] = {0, 0, 0, 0};
  for (size_t r = 0; r < 4; ++r) {
    auto mine = partition_for_rank(plan, 4, r);
    REQUIRE(mine.size() == 3);  // ceil(10/4): lockstep round count
    for (const auto& rb : mine)
      if (!rb.dummy) ++real_counts[r];
  }
  CHECK(real_counts[0] == 3);
  CHECK(real_counts[1] == 3);
  CHECK(real_counts[2] == 2);
  CHECK(real_counts[3] == 2);

  auto r2 = partition_for_rank(plan, 4, 2);
  CHECK(r2[2].dummy);
  CHECK(r2[2].batch_index == 2);  // rank's own first real batch
  auto r3 = partition_for_rank(plan, 4, 3);
  CHECK(r3[2].dummy);
  CHECK(r3[2].batch_index == 3);
}

TEST_CASE("partition: completeness over (world, batches) grid") {
  for (size_t world : {1u, 2u, 3u, 4u, 7u, 8u, 16u, 64u}) {
    for (size_t nb : {1u, 2u, 3u, 5u, 10u, 63u, 64u, 65u, 999u, 1000u}) {
      BatchPlan plan;
      plan.batches.assign(nb, {0});
      std::vector<int> hits(nb, 0);
      size_t rounds = (nb + world - 1) / world;
      for (size_t r = 0; r < world; ++r) {
        auto mine = partition_for_rank(plan, world, r);
        REQUIRE(mine.size() == rounds);
        for (const auto& rb : mine) {
          REQUIRE(rb.batch_index < nb);
          if (!rb.dummy) ++hits[rb.batch_index];
        }
      }
      for (size_t i = 0; i < nb; ++i) REQUIRE(hits[i] == 1);
    }
  }
}

TEST_CASE("partition: argument validation") {
  BatchPlan plan;
  CHECK_THROWS_AS(partition_for_rank(plan, 2, 0), config_error);  // empty
  plan.batches = {{0}};
  CHECK_THROWS_AS(partition_for_rank(plan, 0, 0), config_error);
  CHECK_THROWS_AS(partition_for_rank(plan, 2, 2), config_error);
}
