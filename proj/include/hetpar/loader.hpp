#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "hetpar/dataset.hpp"

namespace hetpar {

enum class CachePolicy : uint8_t { lru = 0, lfu = 1 };

struct LoaderOptions {
  size_t prefetch_depth = 2;  // ready batches ahead of the consumer; 0 = sync
  size_t cache_bytes = 0;     // record cache capacity; 0 disables caching
  CachePolicy cache_policy = CachePolicy::lru;
};

struct LoadedBatch {
  uint64_t batch_index = 0;
  bool dummy = false;
  std::vector<Record> records;
};

// Shared, internally synchronized record cache. Capacity is accounted in
// serialized record bytes; an over-capacity record is served uncached.
class RecordCache {
 public:
  RecordCache(size_t capacity_bytes, CachePolicy policy)
      : capacity_(capacity_bytes), policy_(policy) {}

  std::optional<Record> get(uint64_t key);
  void put(uint64_t key, const Record& rec, size_t bytes);

  uint64_t hits() const { return hits_; }
  uint64_t misses() const { return misses_; }

 private:
  struct Entry {
    Record rec;
    size_t bytes = 0;
    uint64_t freq = 0;
    uint64_t last_use = 0;
  };
  void evict_until_fits(size_t incoming);

  size_t capacity_;
  CachePolicy policy_;
  std::map<uint64_t, Entry> entries_;
  size_t used_ = 0;
  uint64_t tick_ = 0;
  uint64_t hits_ = 0;
  uint64_t misses_ = 0;
  mutable std::mutex mu_;
};

// Serves one rank's schedule in order. With prefetch_depth > 0 a background
// producer keeps that many assembled batches ready; the batch sequence is
// identical either way.
class BatchLoader {
 public:
  BatchLoader(const DatasetIndex& index, const BatchPlan& plan,
              std::vector<RankBatch> schedule, LoaderOptions opts);
  ~BatchLoader();

  BatchLoader(const BatchLoader&) = delete;
  BatchLoader& operator=(const BatchLoader&) = delete;

  // Fills `out` with the next batch; returns false (and leaves `out`
  // untouched) once the schedule is exhausted.
  bool next(LoadedBatch& out);

  const RecordCache& cache() const { return cache_; }

 private:
  LoadedBatch assemble(size_t cursor);
  void producer_main();

  const DatasetIndex& index_;
  const BatchPlan& plan_;
  std::vector<RankBatch> schedule_;
  LoaderOptions opts_;
  RecordCache cache_;

  size_t sync_cursor_ = 0;

  std::thread producer_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<LoadedBatch> queue_;
  bool done_ = false;  // producer exhausted the schedule
  bool stop_ = false;  // destructor asked the producer to quit
  std::exception_ptr error_;
};

}  // namespace hetpar
