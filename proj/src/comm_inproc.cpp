#include <chrono>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <optional>

#include "hetpar/comm.hpp"

namespace hetpar {

namespace {

enum class CollOp : int { broadcast = 1, all_reduce = 2, gather = 3, barrier = 4 };

}  // namespace

// Rendezvous shared by all rank threads. One collective is in flight at a
// time; the last arriver combines the slots in rank order and publishes the
// result. A single result buffer suffices: no rank can enter collective
// N+1 before every rank has consumed the result of N.
class InprocHub {
 public:
  InprocHub(size_t world, int timeout_ms)
      : world_(world), timeout_(std::chrono::milliseconds(timeout_ms)) {
    if (world == 0) throw comm_error("world_size must be >= 1");
    joined_.assign(world, false);
    slots_.resize(world);
  }

  size_t world() const { return world_; }

  void join(size_t rank) {
    std::unique_lock<std::mutex> lk(mu_);
    if (rank >= world_)
      throw comm_error("rank " + std::to_string(rank) +
                       " out of range for world_size " +
                       std::to_string(world_));
    if (joined_[rank]) {
      poison("duplicate rank " + std::to_string(rank) + " joined the group");
      cv_.notify_all();
      throw comm_error(poison_msg_);
    }
    joined_[rank] = true;
    ++join_count_;
    cv_.notify_all();
    bool ok = cv_.wait_for(lk, timeout_, [&] {
      return join_count_ == world_ || poisoned_;
    });
    if (poisoned_) throw comm_error(poison_msg_);
    if (!ok) {
      poison("timeout waiting for all ranks to join");
      cv_.notify_all();
      throw comm_error(poison_msg_);
    }
  }

  // root < 0 marks ops without a root. Returns the combined result.
  std::vector<uint8_t> collect(size_t rank, uint64_t seq, CollOp op, int root,
                               std::vector<uint8_t> payload) {
    std::unique_lock<std::mutex> lk(mu_);
    if (poisoned_) throw comm_error(poison_msg_);

    if (arrived_ == 0) {
      cur_seq_ = seq;
      cur_op_ = op;
      cur_root_ = root;
      for (auto& s : slots_) s.reset();
    } else if (seq != cur_seq_ || op != cur_op_ || root != cur_root_) {
      poison("collective mismatch: rank " + std::to_string(rank) +
             " issued seq " + std::to_string(seq) + ", group is at seq " +
             std::to_string(cur_seq_));
      cv_.notify_all();
      throw comm_error(poison_msg_);
    }
    if (slots_[rank].has_value()) {
      poison("rank " + std::to_string(rank) + " entered the same collective twice");
      cv_.notify_all();
      throw comm_error(poison_msg_);
    }
    slots_[rank] = std::move(payload);
    ++arrived_;

    if (arrived_ == world_) {
      try {
        result_ = combine();
      } catch (const comm_error& e) {
        poison(e.what());
        cv_.notify_all();
        throw comm_error(poison_msg_);
      }
      arrived_ = 0;
      ++gen_;
      cv_.notify_all();
      return result_;
    }

    uint64_t my_gen = gen_;
    bool ok = cv_.wait_for(lk, timeout_,
                           [&] { return gen_ != my_gen || poisoned_; });
    if (poisoned_) throw comm_error(poison_msg_);
    if (!ok) {
      poison("collective timeout at seq " + std::to_string(seq) + ": " +
             std::to_string(world_ - count_arrived()) +
             " ranks never arrived");
      cv_.notify_all();
      throw comm_error(poison_msg_);
    }
    return result_;
  }

 private:
  size_t count_arrived() const {
    size_t n = 0;
    for (const auto& s : slots_)
      if (s.has_value()) ++n;
    return n;
  }

  void poison(const std::string& msg) {
    poisoned_ = true;
    poison_msg_ = "process group failed: " + msg;
  }

  // Called by the last arriver with all slots filled, under the lock.
  std::vector<uint8_t> combine() {
    switch (cur_op_) {
      case CollOp::broadcast:
        return *slots_[static_cast<size_t>(cur_root_)];
      case CollOp::all_reduce: {
        std::vector<std::vector<double>> contribs;
        for (const auto& s : slots_) {
          std::vector<double> v(s->size() / 8);
          if (!v.empty()) std::memcpy(v.data(), s->data(), s->size());
          contribs.push_back(std::move(v));
        }
        auto sum = fold_rank_ordered(contribs);
        std::vector<uint8_t> out(sum.size() * 8);
        if (!out.empty()) std::memcpy(out.data(), sum.data(), out.size());
        return out;
      }
      case CollOp::gather: {
        std::vector<uint8_t> out;
        for (const auto& s : slots_)
          out.insert(out.end(), s->begin(), s->end());
        return out;
      }
      case CollOp::barrier:
        return {};
    }
    throw comm_error("unknown collective op");
  }

  size_t world_;
  std::chrono::milliseconds timeout_;
  std::mutex mu_;
  std::condition_variable cv_;

  std::vector<bool> joined_;
  size_t join_count_ = 0;

  std::vector<std::optional<std::vector<uint8_t>>> slots_;
  size_t arrived_ = 0;
  uint64_t cur_seq_ = 0;
  CollOp cur_op_ = CollOp::barrier;
  int cur_root_ = -1;
  uint64_t gen_ = 0;
  std::vector<uint8_t> result_;

  bool poisoned_ = false;
  std::string poison_msg_;
};

std::shared_ptr<InprocHub> make_inproc_hub(size_t world, int timeout_ms) {
  return std::make_shared<InprocHub>(world, timeout_ms);
}

namespace {

class InprocGroup final : public ProcessGroup {
 public:
  InprocGroup(std::shared_ptr<InprocHub> hub, size_t rank)
      : ProcessGroup(hub->world(), rank), hub_(std::move(hub)) {
    hub_->join(rank);
  }

  std::vector<uint8_t> broadcast(const std::vector<uint8_t>& payload,
                                 size_t root) override {
    if (root >= world_) throw comm_error("broadcast root out of range");
    std::vector<uint8_t> mine = rank_ == root ? payload : std::vector<uint8_t>{};
    return hub_->collect(rank_, seq_++, CollOp::broadcast,
                         static_cast<int>(root), std::move(mine));
  }

  std::vector<double> all_reduce_sum(const std::vector<double>& v) override {
    std::vector<uint8_t> bytes(v.size() * 8);
    if (!bytes.empty()) std::memcpy(bytes.data(), v.data(), bytes.size());
    auto out = hub_->collect(rank_, seq_++, CollOp::all_reduce, -1,
                             std::move(bytes));
    std::vector<double> sum(out.size() / 8);
    if (!sum.empty()) std::memcpy(sum.data(), out.data(), out.size());
    return sum;
  }

  std::vector<double> gather_scalars(double v) override {
    std::vector<uint8_t> bytes(8);
    std::memcpy(bytes.data(), &v, 8);
    auto out =
        hub_->collect(rank_, seq_++, CollOp::gather, -1, std::move(bytes));
    if (rank_ != 0) return {};
    std::vector<double> all(out.size() / 8);
    std::memcpy(all.data(), out.data(), out.size());
    return all;
  }

  void barrier() override {
    hub_->collect(rank_, seq_++, CollOp::barrier, -1, {});
  }

 private:
  std::shared_ptr<InprocHub> hub_;
  uint64_t seq_ = 0;
};

}  // namespace

std::unique_ptr<ProcessGroup> make_inproc_group(std::shared_ptr<InprocHub> hub,
                                                size_t rank) {
  if (!hub) throw comm_error("null inproc hub");
  return std::make_unique<InprocGroup>(std::move(hub), rank);
}

}  // namespace hetpar
