#include "hetpar/textgen.hpp"

namespace hetpar {

std::vector<std::string> greedy_subword_tokenize(
    const std::string& word, const std::set<std::string>& vocab) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos < word.size()) {
    size_t best = 0;
    for (size_t len = word.size() - pos; len >= 1; --len) {
      if (vocab.count(word.substr(pos, len))) {
        best = len;
        break;
      }
    }
    if (best == 0) return {"[UNK]"};
    out.push_back(word.substr(pos, best));
    pos += best;
  }
  return out;
}

MaskResult mask_tokens(const std::vector<int64_t>& tokens, SeededRng& rng,
                       int64_t vocab_size, double p_select, double p_mask,
                       double p_random) {
  if (vocab_size <= kFirstWordId)
    throw config_error("mask_tokens: vocab has no word ids");
  if (p_mask + p_random > 1.0)
    throw config_error("mask_tokens: branch probabilities exceed 1");
  const int64_t n_words = vocab_size - kFirstWordId;

  MaskResult out;
  out.tokens = tokens;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (is_special_token(tokens[i])) continue;
    if (rng.next_double() >= p_select) continue;
    out.positions.push_back(static_cast<int64_t>(i));
    out.originals.push_back(tokens[i]);
    double branch = rng.next_double();
    if (branch < p_mask) {
      out.tokens[i] = kMaskId;
    } else if (branch < p_mask + p_random) {
      // Uniform over the other words: draw from n_words-1 and skip the
      // original, so the replacement always differs and is never a special.
      if (n_words < 2)
        throw config_error("mask_tokens: random branch needs >= 2 words");
      int64_t r = static_cast<int64_t>(
          rng.bounded(static_cast<uint64_t>(n_words - 1)));
      int64_t original_slot = tokens[i] - kFirstWordId;
      if (r >= original_slot) ++r;
      out.tokens[i] = kFirstWordId + r;
    }
    // Third branch: token kept as-is, still recorded as a target.
  }
  return out;
}

NspPair make_nsp_pair(const Corpus& corpus, SeededRng& rng) {
  if (corpus.size() < 2)
    throw config_error("make_nsp_pair: corpus needs >= 2 documents");
  for (const auto& doc : corpus) {
    if (doc.size() < 2)
      throw config_error("make_nsp_pair: every document needs >= 2 sentences");
  }

  NspPair out;
  size_t d = rng.bounded(corpus.size());
  size_t i = rng.bounded(corpus[d].size() - 1);  // successor must exist
  out.a = corpus[d][i];
  if (rng.next_double() < 0.5) {
    out.label = 1;
    out.b = corpus[d][i + 1];
  } else {
    out.label = 0;
    size_t o = rng.bounded(corpus.size() - 1);
    if (o >= d) ++o;
    out.b = corpus[o][rng.bounded(corpus[o].size())];
  }
  return out;
}

AssembledPair assemble_pair(const std::vector<int64_t>& a,
                            const std::vector<int64_t>& b) {
  AssembledPair out;
  out.tokens.push_back(kClsId);
  out.tokens.insert(out.tokens.end(), a.begin(), a.end());
  out.tokens.push_back(kSepId);
  size_t first_segment = out.tokens.size();  // 0 up to and incl. first [SEP]
  out.tokens.insert(out.tokens.end(), b.begin(), b.end());
  out.tokens.push_back(kSepId);
  out.segments.assign(out.tokens.size(), 1);
  for (size_t i = 0; i < first_segment; ++i) out.segments[i] = 0;
  return out;
}

}  // namespace hetpar
