#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hetpar/model.hpp"
#include "hetpar/shard.hpp"
#include "hetpar/textgen.hpp"

namespace hetpar {

// Gaussian feature clusters with class-separated centers; labels cycle
// 0..classes-1 so every class is populated.
struct ClassifyGenConfig {
  uint64_t n = 1000;
  size_t d = 20;
  size_t classes = 5;
  uint64_t seed = 7;
  size_t shards = 4;
};

// Masked [CLS] A [SEP] B [SEP] instances with NSP labels over a synthetic
// corpus drawn from the same seed.
struct MlmGenConfig {
  uint64_t n = 1000;
  int64_t vocab = 64;  // includes the 4 special ids
  size_t docs = 8;
  size_t sentences_per_doc = 12;
  size_t min_sentence_words = 3;
  size_t max_sentence_words = 8;
  double p_select = 0.15;
  double p_mask = 0.8;
  double p_random = 0.1;
  uint64_t seed = 7;
  size_t shards = 4;
};

// Both emit shard_%04d.hsd under dir and return the paths in order.
std::vector<std::string> generate_classify_shards(const std::string& dir,
                                                  const ClassifyGenConfig& cfg);
std::vector<std::string> generate_mlm_shards(const std::string& dir,
                                             const MlmGenConfig& cfg);

// All *.hsd files under dir, lexicographically sorted.
std::vector<std::string> list_shards(const std::string& dir);

// Inverse of the generators' record layout, keyed by field name.
Instance instance_from_record(const std::vector<FieldSchema>& schema,
                              const Record& rec, uint32_t token_length);

}  // namespace hetpar
