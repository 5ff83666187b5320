#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "hetpar/common.hpp"
#include "hetpar/rng.hpp"

namespace hetpar {

// Token id layout for generated text tasks: four specials, then words.
constexpr int64_t kClsId = 0;
constexpr int64_t kSepId = 1;
constexpr int64_t kMaskId = 2;
constexpr int64_t kUnkId = 3;
constexpr int64_t kFirstWordId = 4;

inline bool is_special_token(int64_t id) { return id < kFirstWordId; }

// Greedy longest-prefix tokenization. If at any point no vocab entry
// prefixes the remainder, the WHOLE word collapses to a single "[UNK]".
std::vector<std::string> greedy_subword_tokenize(
    const std::string& word, const std::set<std::string>& vocab);

struct MaskResult {
  std::vector<int64_t> tokens;     // input with replacements applied
  std::vector<int64_t> positions;  // masked positions, ascending
  std::vector<int64_t> originals;  // original ids at those positions
};

// Each non-special position is selected with p_select; a selected token
// becomes '[MASK]' with p_mask, a random DIFFERENT word with p_random, and
// stays unchanged otherwise. Draw order is fixed: one selection draw per
// eligible position, then branch and replacement draws only when selected.
MaskResult mask_tokens(const std::vector<int64_t>& tokens, SeededRng& rng,
                       int64_t vocab_size, double p_select = 0.15,
                       double p_mask = 0.8, double p_random = 0.1);

// documents -> sentences -> word ids.
using Corpus = std::vector<std::vector<std::vector<int64_t>>>;

struct NspPair {
  std::vector<int64_t> a;
  std::vector<int64_t> b;
  int64_t label = 0;  // 1: b really follows a
};

// Label 1 with probability 0.5 using the true successor sentence from the
// same document; label 0 pairs a with a random sentence of another document.
NspPair make_nsp_pair(const Corpus& corpus, SeededRng& rng);

struct AssembledPair {
  std::vector<int64_t> tokens;    // [CLS] a [SEP] b [SEP]
  std::vector<int64_t> segments;  // 0 through the first [SEP], then 1
};

AssembledPair assemble_pair(const std::vector<int64_t>& a,
                            const std::vector<int64_t>& b);

}  // namespace hetpar
