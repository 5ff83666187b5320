#include "hetpar/datagen.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>

#include "hetpar/rng.hpp"

namespace hetpar {

namespace {

std::string shard_name(const std::string& dir, size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "shard_%04zu.hsd", k);
  return (std::filesystem::path(dir) / buf).string();
}

// Splits n into `shards` contiguous chunks, earlier chunks one longer.
std::vector<uint64_t> chunk_sizes(uint64_t n, size_t shards) {
  if (shards == 0) throw config_error("datagen: shards must be >= 1");
  std::vector<uint64_t> out(shards, n / shards);
  for (size_t k = 0; k < n % shards; ++k) ++out[k];
  return out;
}

}  // namespace

std::vector<std::string> generate_classify_shards(
    const std::string& dir, const ClassifyGenConfig& cfg) {
  if (cfg.d == 0 || cfg.classes == 0)
    throw config_error("datagen: d and classes must be >= 1");
  std::filesystem::create_directories(dir);

  const std::vector<FieldSchema> schema = {{"features", Dtype::f64, 1},
                                           {"label", Dtype::i64, 1}};
  // Class c centers on axis c mod d; classes that wrap the axis set are
  // pushed further out, keeping every pair of centers 4+ apart.
  auto center = [&](size_t c, size_t j) {
    return j == c % cfg.d
               ? 4.0 * (1.0 + static_cast<double>(c / cfg.d))
               : 0.0;
  };

  SeededRng rng(cfg.seed);
  auto sizes = chunk_sizes(cfg.n, cfg.shards);
  std::vector<std::string> paths;
  uint64_t i = 0;
  for (size_t k = 0; k < cfg.shards; ++k) {
    std::vector<Record> recs;
    std::vector<uint32_t> lens;
    for (uint64_t r = 0; r < sizes[k]; ++r, ++i) {
      size_t label = static_cast<size_t>(i % cfg.classes);
      std::vector<double> feat(cfg.d);
      for (size_t j = 0; j < cfg.d; ++j)
        feat[j] = center(label, j) + rng.next_gaussian();
      Record rec;
      rec.fields.push_back(FieldValue::from_f64(feat));
      rec.fields.push_back(
          FieldValue::from_i64({static_cast<int64_t>(label)}));
      recs.push_back(std::move(rec));
      lens.push_back(1);
    }
    paths.push_back(shard_name(dir, k));
    write_shard(paths.back(), schema, recs, lens);
  }
  return paths;
}

std::vector<std::string> generate_mlm_shards(const std::string& dir,
                                             const MlmGenConfig& cfg) {
  if (cfg.vocab < kFirstWordId + 2)
    throw config_error("datagen: mlm vocab needs >= 2 word ids");
  if (cfg.docs < 2 || cfg.sentences_per_doc < 2)
    throw config_error(
        "datagen: corpus needs >= 2 documents of >= 2 sentences");
  if (cfg.min_sentence_words == 0 ||
      cfg.min_sentence_words > cfg.max_sentence_words)
    throw config_error("datagen: bad sentence length range");
  std::filesystem::create_directories(dir);

  const std::vector<FieldSchema> schema = {{"tokens", Dtype::i64, 1},
                                           {"segments", Dtype::i64, 1},
                                           {"mask_positions", Dtype::i64, 1},
                                           {"mask_originals", Dtype::i64, 1},
                                           {"label", Dtype::i64, 1}};

  SeededRng rng(cfg.seed);
  const uint64_t n_words = static_cast<uint64_t>(cfg.vocab - kFirstWordId);
  Corpus corpus(cfg.docs);
  for (auto& doc : corpus) {
    doc.resize(cfg.sentences_per_doc);
    for (auto& sent : doc) {
      size_t len = cfg.min_sentence_words +
                   rng.bounded(cfg.max_sentence_words -
                               cfg.min_sentence_words + 1);
      for (size_t w = 0; w < len; ++w)
        sent.push_back(kFirstWordId +
                       static_cast<int64_t>(rng.bounded(n_words)));
    }
  }

  auto sizes = chunk_sizes(cfg.n, cfg.shards);
  std::vector<std::string> paths;
  for (size_t k = 0; k < cfg.shards; ++k) {
    std::vector<Record> recs;
    std::vector<uint32_t> lens;
    for (uint64_t r = 0; r < sizes[k]; ++r) {
      NspPair pair = make_nsp_pair(corpus, rng);
      AssembledPair asm_ = assemble_pair(pair.a, pair.b);
      MaskResult masked = mask_tokens(asm_.tokens, rng, cfg.vocab,
                                      cfg.p_select, cfg.p_mask, cfg.p_random);
      Record rec;
      rec.fields.push_back(FieldValue::from_i64(masked.tokens));
      rec.fields.push_back(FieldValue::from_i64(asm_.segments));
      rec.fields.push_back(FieldValue::from_i64(masked.positions));
      rec.fields.push_back(FieldValue::from_i64(masked.originals));
      rec.fields.push_back(FieldValue::from_i64({pair.label}));
      recs.push_back(std::move(rec));
      lens.push_back(static_cast<uint32_t>(masked.tokens.size()));
    }
    paths.push_back(shard_name(dir, k));
    write_shard(paths.back(), schema, recs, lens);
  }
  return paths;
}

std::vector<std::string> list_shards(const std::string& dir) {
  std::vector<std::string> out;
  if (!std::filesystem::is_directory(dir))
    throw io_error("not a directory: " + dir);
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".hsd")
      out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Instance instance_from_record(const std::vector<FieldSchema>& schema,
                              const Record& rec, uint32_t token_length) {
  if (rec.fields.size() != schema.size())
    throw shape_error("record does not match schema");
  Instance in;
  in.token_length = token_length;
  for (size_t i = 0; i < schema.size(); ++i) {
    const auto& name = schema[i].name;
    const auto& fv = rec.fields[i];
    if (name == "features") {
      in.features = fv.as_f64();
    } else if (name == "label") {
      auto v = fv.as_i64();
      if (v.size() != 1) throw shape_error("label field must hold one value");
      in.label = v[0];
    } else if (name == "tokens") {
      in.tokens = fv.as_i64();
    } else if (name == "segments") {
      in.segments = fv.as_i64();
    } else if (name == "mask_positions") {
      in.mask_positions = fv.as_i64();
    } else if (name == "mask_originals") {
      in.mask_originals = fv.as_i64();
    } else {
      throw config_error("unknown field name in shard: " + name);
    }
  }
  return in;
}

}  // namespace hetpar
