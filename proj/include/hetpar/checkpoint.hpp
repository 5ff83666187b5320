#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hetpar/model.hpp"
#include "hetpar/optim.hpp"

namespace hetpar {

// Everything a rank needs to continue training deterministically. Only the
// master persists it; every rank can reconstruct its position from (N, P, S)
// because batch plans are pure functions of the seed.
template <class T>
struct TrainState {
  ModelSpec spec;
  WeightPolicy policy = WeightPolicy::sentences;
  Parameters<T> params;
  Optimizer<T> opt;
  SchedulerConfig sched;
  uint64_t epoch = 0;  // N: completed data epochs
  uint64_t step = 0;   // P: completed optimizer updates
  uint64_t seed = 0;   // S: base seed for every derived generator
  size_t world = 1;    // world size the run was launched with
  size_t rank = 0;     // not persisted; identifies the local member
  size_t update_freq = 1;
};

// File layout (little-endian):
//   magic "HCK1" | u16 version | u64 epoch N | u64 step P | u64 seed S
//   u8 weight policy | u32 spec json length | spec json bytes
//   u32 param count
//   per param: u16 name length | name | u8 dtype | u8 rank | u32 dims | payload
//   u8 optimizer kind; adam adds u64 t, then all m payloads, then all v
//   u64 FNV-1a digest of every preceding byte
// Written atomically (temp file + rename); a torn write never replaces a
// valid checkpoint.
template <class T>
void save_checkpoint(const TrainState<T>& st, const std::string& path);

// Digest-validates before reconstructing; a truncated or corrupt file is an
// io_error, never partial state. The requested dtype must match the file.
template <class T>
TrainState<T> load_checkpoint(const std::string& path);

// Header-level view for inspection tools; payloads stay on disk.
struct CheckpointParamInfo {
  std::string name;
  uint8_t dtype = 0;  // 1 = f32, 2 = f64
  uint32_t rows = 0;
  uint32_t cols = 0;
};
struct CheckpointMeta {
  uint16_t version = 0;
  uint64_t epoch = 0;
  uint64_t step = 0;
  uint64_t seed = 0;
  WeightPolicy policy = WeightPolicy::sentences;
  std::string spec_json;
  std::vector<CheckpointParamInfo> params;
  OptKind opt_kind = OptKind::sgd;
  uint64_t opt_t = 0;
};
CheckpointMeta inspect_checkpoint(const std::string& path);

}  // namespace hetpar
