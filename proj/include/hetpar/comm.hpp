#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hetpar/common.hpp"

namespace hetpar {

// Collective communication over a fixed world of ranks. Every rank must
// issue the same collectives in the same order; a skipped or mismatched
// call is detected and fatal for the whole group. All collectives are
// blocking and return identical bytes on every rank (gather excepted).
class ProcessGroup {
 public:
  virtual ~ProcessGroup() = default;

  size_t world_size() const { return world_; }
  size_t rank() const { return rank_; }
  bool is_master() const { return rank_ == 0; }

  // Every rank returns the root's exact bytes; non-root inputs are ignored.
  virtual std::vector<uint8_t> broadcast(const std::vector<uint8_t>& payload,
                                         size_t root) = 0;

  // Elementwise sum accumulated in rank order 0 -> world-1; identical
  // bytes everywhere.
  virtual std::vector<double> all_reduce_sum(
      const std::vector<double>& v) = 0;

  // Master receives [v_0 ... v_{w-1}] in rank order; others get empty.
  virtual std::vector<double> gather_scalars(double v) = 0;

  // No rank returns until all have entered.
  virtual void barrier() = 0;

 protected:
  ProcessGroup(size_t world, size_t rank) : world_(world), rank_(rank) {
    if (world == 0) throw comm_error("world_size must be >= 1");
    if (rank >= world)
      throw comm_error("rank " + std::to_string(rank) +
                       " out of range for world_size " + std::to_string(world));
  }

  size_t world_;
  size_t rank_;
};

// Rank-ordered left fold shared by both backends; the determinism contract
// for all_reduce_sum is exactly this accumulation order.
inline std::vector<double> fold_rank_ordered(
    const std::vector<std::vector<double>>& contribs) {
  if (contribs.empty()) throw comm_error("fold over zero contributions");
  std::vector<double> out = contribs[0];
  for (size_t r = 1; r < contribs.size(); ++r) {
    if (contribs[r].size() != out.size())
      throw comm_error("all_reduce length mismatch: rank " + std::to_string(r) +
                       " sent " + std::to_string(contribs[r].size()) +
                       " values, rank 0 sent " + std::to_string(out.size()));
    for (size_t i = 0; i < out.size(); ++i) out[i] += contribs[r][i];
  }
  return out;
}

// In-process backend: ranks are threads of one process sharing a hub. The
// hub must outlive every group created from it.
class InprocHub;
std::shared_ptr<InprocHub> make_inproc_hub(size_t world, int timeout_ms);
// Joins the hub as `rank`; returns once ALL ranks have joined (rendezvous).
std::unique_ptr<ProcessGroup> make_inproc_group(std::shared_ptr<InprocHub> hub,
                                                size_t rank);

// TCP backend: ranks are processes; rank 0 listens and serves as the
// rendezvous and reduction master.
struct TcpConfig {
  std::string host = "127.0.0.1";
  uint16_t port = 0;
  size_t world = 1;
  size_t rank = 0;
  int timeout_ms = 30000;
};
std::unique_ptr<ProcessGroup> make_tcp_group(const TcpConfig& cfg);

}  // namespace hetpar
