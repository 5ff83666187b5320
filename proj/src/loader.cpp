#include "hetpar/loader.hpp"

#include <algorithm>

namespace hetpar {

std::optional<Record> RecordCache::get(uint64_t key) {
  if (capacity_ == 0) return std::nullopt;
  std::lock_guard<std::mutex> g(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  it->second.freq += 1;
  it->second.last_use = ++tick_;
  return it->second.rec;
}

void RecordCache::put(uint64_t key, const Record& rec, size_t bytes) {
  if (capacity_ == 0 || bytes > capacity_) return;
  std::lock_guard<std::mutex> g(mu_);
  if (entries_.count(key)) return;
  evict_until_fits(bytes);
  Entry e;
  e.rec = rec;
  e.bytes = bytes;
  e.freq = 1;
  e.last_use = ++tick_;
  used_ += bytes;
  entries_.emplace(key, std::move(e));
}

void RecordCache::evict_until_fits(size_t incoming) {
  while (!entries_.empty() && used_ + incoming > capacity_) {
    auto victim = entries_.begin();
    for (auto it = std::next(entries_.begin()); it != entries_.end(); ++it) {
      const Entry& a = it->second;
      const Entry& b = victim->second;
      bool worse = policy_ == CachePolicy::lru
                       ? a.last_use < b.last_use
                       : (a.freq < b.freq ||
                          (a.freq == b.freq && a.last_use < b.last_use));
      if (worse) victim = it;
    }
    used_ -= victim->second.bytes;
    entries_.erase(victim);
  }
}

BatchLoader::BatchLoader(const DatasetIndex& index, const BatchPlan& plan,
                         std::vector<RankBatch> schedule, LoaderOptions opts)
    : index_(index),
      plan_(plan),
      schedule_(std::move(schedule)),
      opts_(opts),
      cache_(opts.cache_bytes, opts.cache_policy) {
  for (const auto& rb : schedule_) {
    if (rb.batch_index >= plan_.batches.size())
      throw config_error("schedule references batch " +
                         std::to_string(rb.batch_index) + " beyond plan size " +
                         std::to_string(plan_.batches.size()));
  }
  if (opts_.prefetch_depth > 0)
    producer_ = std::thread([this] { producer_main(); });
}

BatchLoader::~BatchLoader() {
  if (producer_.joinable()) {
    {
      std::lock_guard<std::mutex> g(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    producer_.join();
  }
}

LoadedBatch BatchLoader::assemble(size_t cursor) {
  const RankBatch& rb = schedule_[cursor];
  LoadedBatch out;
  out.batch_index = rb.batch_index;
  out.dummy = rb.dummy;
  for (uint64_t g : plan_.batches[rb.batch_index]) {
    if (auto cached = cache_.get(g)) {
      out.records.push_back(std::move(*cached));
      continue;
    }
    auto [shard, off] = locate(index_, g);
    Record rec = index_.shards[shard]->read(off);
    cache_.put(g, rec, index_.shards[shard]->record_bytes(off));
    out.records.push_back(std::move(rec));
  }
  return out;
}

void BatchLoader::producer_main() {
  try {
    for (size_t cursor = 0; cursor < schedule_.size(); ++cursor) {
      LoadedBatch b = assemble(cursor);
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait(lk, [this] {
        return stop_ || queue_.size() < opts_.prefetch_depth;
      });
      if (stop_) return;
      queue_.push_back(std::move(b));
      lk.unlock();
      cv_.notify_all();
    }
    std::lock_guard<std::mutex> g(mu_);
    done_ = true;
    cv_.notify_all();
  } catch (...) {
    std::lock_guard<std::mutex> g(mu_);
    error_ = std::current_exception();
    done_ = true;
    cv_.notify_all();
  }
}

bool BatchLoader::next(LoadedBatch& out) {
  if (opts_.prefetch_depth == 0) {
    if (sync_cursor_ >= schedule_.size()) return false;
    out = assemble(sync_cursor_++);
    return true;
  }
  std::unique_lock<std::mutex> lk(mu_);
  cv_.wait(lk, [this] { return !queue_.empty() || done_; });
  if (!queue_.empty()) {
    out = std::move(queue_.front());
    queue_.pop_front();
    lk.unlock();
    cv_.notify_all();
    return true;
  }
  if (error_) std::rethrow_exception(error_);
  return false;
}

}  // namespace hetpar
