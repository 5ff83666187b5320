#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hetpar/attention.hpp"
#include "hetpar/common.hpp"
#include "hetpar/rng.hpp"
#include "hetpar/tape.hpp"
#include "hetpar/tensor.hpp"

namespace hetpar {

enum class Arch : uint8_t { mlp = 1, attention_classifier = 2, masked_token_model = 3 };
enum class WeightPolicy : uint8_t { sentences = 1, tokens = 2 };

inline const char* arch_name(Arch a) {
  switch (a) {
    case Arch::mlp: return "mlp";
    case Arch::attention_classifier: return "attention_classifier";
    case Arch::masked_token_model: return "masked_token_model";
  }
  return "?";
}

struct ModelSpec {
  Arch arch = Arch::mlp;
  std::vector<size_t> layers;  // mlp: sizes input..output
  size_t d_model = 0;
  size_t heads = 1;
  size_t vocab = 0;
  size_t max_seq = 0;
  size_t classes = 0;
  bool with_nsp = true;
  double label_smooth_eps = 0.0;

  void validate() const {
    if (!(label_smooth_eps >= 0.0 && label_smooth_eps < 1.0))
      throw config_error("label_smooth_eps outside [0,1)");
    switch (arch) {
      case Arch::mlp:
        if (layers.size() < 2) throw config_error("mlp needs >= 2 layer sizes");
        for (size_t s : layers)
          if (s == 0) throw config_error("mlp layer size 0");
        break;
      case Arch::attention_classifier:
        if (d_model == 0 || vocab == 0 || max_seq == 0 || classes == 0)
          throw config_error("attention_classifier needs d_model/vocab/max_seq/classes");
        if (heads == 0 || d_model % heads != 0)
          throw config_error("d_model not divisible by heads");
        if (d_model % 2 != 0) throw config_error("d_model must be even");
        break;
      case Arch::masked_token_model:
        if (d_model == 0 || vocab == 0 || max_seq == 0)
          throw config_error("masked_token_model needs d_model/vocab/max_seq");
        if (heads == 0 || d_model % heads != 0)
          throw config_error("d_model not divisible by heads");
        if (d_model % 2 != 0) throw config_error("d_model must be even");
        break;
    }
  }
};

// One training instance in memory. Which fields are meaningful depends on the
// architecture; token_length carries the stored per-record length used by the
// tokens weight policy for feature data.
struct Instance {
  std::vector<double> features;
  int64_t label = -1;
  std::vector<int64_t> tokens;
  std::vector<int64_t> segments;
  std::vector<int64_t> mask_positions;
  std::vector<int64_t> mask_originals;
  int64_t token_length = 1;
};
using Batch = std::vector<Instance>;

// Parameter shape table. Everything about a parameter set is derivable from
// the spec alone; init, checkpointing, and broadcast all share this order.
struct ParamShape {
  std::string name;
  size_t rows, cols;
  bool row_table;  // row-indexed embedding table: fan_in = cols
  bool bias;       // zero-initialized

  bool operator==(const ParamShape&) const = default;
};

inline std::vector<ParamShape> param_shapes(const ModelSpec& s) {
  s.validate();
  std::vector<ParamShape> out;
  auto w = [&](std::string n, size_t r, size_t c) {
    out.push_back({std::move(n), r, c, false, false});
  };
  auto tbl = [&](std::string n, size_t r, size_t c) {
    out.push_back({std::move(n), r, c, true, false});
  };
  auto b = [&](std::string n, size_t c) {
    out.push_back({std::move(n), 1, c, false, true});
  };
  auto attention_block = [&] {
    size_t dk = s.d_model / s.heads;
    for (size_t i = 0; i < s.heads; ++i)
      w("wq." + std::to_string(i), s.d_model, dk);
    for (size_t i = 0; i < s.heads; ++i)
      w("wk." + std::to_string(i), s.d_model, dk);
    for (size_t i = 0; i < s.heads; ++i)
      w("wv." + std::to_string(i), s.d_model, dk);
    w("wo", s.d_model, s.d_model);
  };
  switch (s.arch) {
    case Arch::mlp:
      for (size_t l = 0; l + 1 < s.layers.size(); ++l) {
        w("layer" + std::to_string(l) + ".w", s.layers[l], s.layers[l + 1]);
        b("layer" + std::to_string(l) + ".b", s.layers[l + 1]);
      }
      break;
    case Arch::attention_classifier:
      tbl("embed", s.vocab, s.d_model);
      attention_block();
      w("cls.w1", s.d_model, s.d_model);
      b("cls.b1", s.d_model);
      w("cls.w2", s.d_model, s.classes);
      b("cls.b2", s.classes);
      break;
    case Arch::masked_token_model:
      tbl("embed", s.vocab, s.d_model);
      tbl("seg0", 1, s.d_model);
      tbl("seg1", 1, s.d_model);
      attention_block();
      w("mlm.w", s.d_model, s.vocab);
      b("mlm.b", s.vocab);
      if (s.with_nsp) {
        w("nsp.w", s.d_model, 2);
        b("nsp.b", 2);
      }
      break;
  }
  return out;
}

template <class T>
struct Parameters {
  struct Entry {
    std::string name;
    Mat<T> m;
  };
  std::vector<Entry> v;

  size_t flat_size() const {
    size_t n = 0;
    for (const auto& e : v) n += e.m.size();
    return n;
  }
  Mat<T>& find(const std::string& name) {
    for (auto& e : v)
      if (e.name == name) return e.m;
    throw index_error("no parameter named " + name);
  }
  const Mat<T>& find(const std::string& name) const {
    return const_cast<Parameters*>(this)->find(name);
  }
};

// Uniform(-a, a) with a = 1/sqrt(fan_in); fan_in is the input dimension:
// rows for right-multiplied weights, cols for row-indexed tables. Biases are
// zero. Draws follow the canonical parameter order, row-major per tensor.
template <class T>
Parameters<T> init_parameters(const ModelSpec& spec, SeededRng& rng) {
  Parameters<T> p;
  for (const auto& sh : param_shapes(spec)) {
    Mat<T> m(sh.rows, sh.cols);
    if (!sh.bias) {
      double fan_in = static_cast<double>(sh.row_table ? sh.cols : sh.rows);
      double a = 1.0 / std::sqrt(fan_in);
      for (auto& x : m.d)
        x = static_cast<T>(-a + 2.0 * a * rng.next_double());
    }
    p.v.push_back({sh.name, std::move(m)});
  }
  return p;
}

// State-dictionary bytes: raw little-endian payloads in canonical order.
// Shape/type agreement is the caller's contract (same spec on both sides);
// the byte count is still validated on import.
template <class T>
std::vector<uint8_t> params_to_bytes(const Parameters<T>& p) {
  std::vector<uint8_t> out;
  for (const auto& e : p.v)
    put_bytes(out, e.m.d.data(), e.m.size() * sizeof(T));
  return out;
}

template <class T>
void params_from_bytes(Parameters<T>& p, const std::vector<uint8_t>& bytes) {
  size_t want = p.flat_size() * sizeof(T);
  if (bytes.size() != want)
    throw io_error("state dict payload is " + std::to_string(bytes.size()) +
                   " bytes, expected " + std::to_string(want));
  size_t off = 0;
  for (auto& e : p.v) {
    std::memcpy(e.m.d.data(), bytes.data() + off, e.m.size() * sizeof(T));
    off += e.m.size() * sizeof(T);
  }
}

template <class T>
uint64_t params_digest(const Parameters<T>& p) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& e : p.v)
    h = fnv1a64(reinterpret_cast<const uint8_t*>(e.m.d.data()),
                e.m.size() * sizeof(T), h);
  return h;
}

template <class T>
struct ForwardResult {
  Tape<T> tape;
  int loss_node = -1;
  double loss_sum = 0.0;
  double weight = 0.0;
  std::vector<int> param_nodes;  // parallel to Parameters order
};

namespace detail {

struct MhaNodes {
  std::vector<int> wq, wk, wv;
  int wo = -1;
};

inline MhaNodes attention_param_nodes(const ModelSpec& spec,
                                      const std::vector<int>& param_nodes,
                                      size_t& cursor) {
  MhaNodes n;
  for (size_t i = 0; i < spec.heads; ++i)
    n.wq.push_back(param_nodes[cursor++]);
  for (size_t i = 0; i < spec.heads; ++i)
    n.wk.push_back(param_nodes[cursor++]);
  for (size_t i = 0; i < spec.heads; ++i)
    n.wv.push_back(param_nodes[cursor++]);
  n.wo = param_nodes[cursor++];
  return n;
}

template <class T>
int add_loss(Tape<T>& tape, std::optional<int>& total, int piece) {
  total = total ? tape.add(*total, piece) : piece;
  return *total;
}

}  // namespace detail

// Forward pass over a batch. Returns the UNNORMALIZED loss sum, the weight
// under the configured policy, and the tape positioned for backward().
template <class T>
ForwardResult<T> model_forward(const ModelSpec& spec, const Parameters<T>& params,
                               const Batch& batch, WeightPolicy policy) {
  spec.validate();
  if (batch.empty())
    throw config_error("model_forward: empty batch (only the dummy path may skip data)");

  ForwardResult<T> fr;
  Tape<T>& tape = fr.tape;
  for (const auto& e : params.v) fr.param_nodes.push_back(tape.leaf(e.m));

  const T eps = static_cast<T>(spec.label_smooth_eps);
  std::optional<int> total;
  double weight = 0.0;

  switch (spec.arch) {
    case Arch::mlp: {
      const size_t d0 = spec.layers.front();
      Mat<T> X(batch.size(), d0);
      std::vector<int64_t> targets(batch.size());
      for (size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].features.size() != d0)
          throw shape_error("mlp: instance feature length " +
                            std::to_string(batch[i].features.size()) +
                            " != " + std::to_string(d0));
        for (size_t j = 0; j < d0; ++j)
          X.at(i, j) = static_cast<T>(batch[i].features[j]);
        targets[i] = batch[i].label;
        weight += policy == WeightPolicy::sentences
                      ? 1.0
                      : static_cast<double>(batch[i].token_length);
      }
      int h = tape.leaf(std::move(X));
      size_t cursor = 0;
      for (size_t l = 0; l + 1 < spec.layers.size(); ++l) {
        int w = fr.param_nodes[cursor++];
        int b = fr.param_nodes[cursor++];
        h = tape.add_bias(tape.matmul(h, w), b);
        if (l + 2 < spec.layers.size()) h = tape.relu(h);
      }
      detail::add_loss(tape, total, tape.ls_ce(h, targets, eps));
      break;
    }

    case Arch::attention_classifier: {
      size_t cursor = 0;
      int embed = fr.param_nodes[cursor++];
      auto mha = detail::attention_param_nodes(spec, fr.param_nodes, cursor);
      int w1 = fr.param_nodes[cursor++];
      int b1 = fr.param_nodes[cursor++];
      int w2 = fr.param_nodes[cursor++];
      int b2 = fr.param_nodes[cursor++];
      for (const auto& inst : batch) {
        const size_t n = inst.tokens.size();
        if (n == 0) throw shape_error("classifier: empty token sequence");
        if (n > spec.max_seq)
          throw shape_error("classifier: sequence length " + std::to_string(n) +
                            " exceeds max_seq " + std::to_string(spec.max_seq));
        int x = tape.add(tape.gather_rows(embed, inst.tokens),
                         tape.leaf(sinusoidal_positions<T>(n, spec.d_model)));
        int h = multi_head_attention(tape, x, x, x, mha.wq, mha.wk, mha.wv,
                                     mha.wo, static_cast<int>(spec.heads));
        Mat<T> ones(1, n);
        for (auto& o : ones.d) o = T(1);
        int pooled = tape.scale(tape.matmul(tape.leaf(std::move(ones)), h),
                                T(1) / static_cast<T>(n));
        int z1 = tape.relu(tape.add_bias(tape.matmul(pooled, w1), b1));
        int logits = tape.add_bias(tape.matmul(z1, w2), b2);
        detail::add_loss(tape, total, tape.ls_ce(logits, {inst.label}, eps));
        weight += policy == WeightPolicy::sentences ? 1.0
                                                    : static_cast<double>(n);
      }
      break;
    }

    case Arch::masked_token_model: {
      size_t cursor = 0;
      int embed = fr.param_nodes[cursor++];
      int seg0 = fr.param_nodes[cursor++];
      int seg1 = fr.param_nodes[cursor++];
      auto mha = detail::attention_param_nodes(spec, fr.param_nodes, cursor);
      int mlm_w = fr.param_nodes[cursor++];
      int mlm_b = fr.param_nodes[cursor++];
      int nsp_w = -1, nsp_b = -1;
      if (spec.with_nsp) {
        nsp_w = fr.param_nodes[cursor++];
        nsp_b = fr.param_nodes[cursor++];
      }
      for (const auto& inst : batch) {
        const size_t n = inst.tokens.size();
        if (n == 0) throw shape_error("masked model: empty token sequence");
        if (n > spec.max_seq)
          throw shape_error("masked model: sequence length exceeds max_seq");
        if (inst.segments.size() != n)
          throw shape_error("masked model: segment ids length != tokens");
        Mat<T> on0(n, 1), on1(n, 1);
        for (size_t i = 0; i < n; ++i) {
          int64_t s = inst.segments[i];
          if (s != 0 && s != 1)
            throw index_error("segment id must be 0 or 1");
          (s == 0 ? on0 : on1).at(i, 0) = T(1);
        }
        int x = tape.add(
            tape.add(tape.gather_rows(embed, inst.tokens),
                     tape.add(tape.matmul(tape.leaf(std::move(on0)), seg0),
                              tape.matmul(tape.leaf(std::move(on1)), seg1))),
            tape.leaf(sinusoidal_positions<T>(n, spec.d_model)));
        int h = multi_head_attention(tape, x, x, x, mha.wq, mha.wk, mha.wv,
                                     mha.wo, static_cast<int>(spec.heads));
        double inst_weight = 0.0;
        if (!inst.mask_positions.empty()) {
          if (inst.mask_originals.size() != inst.mask_positions.size())
            throw shape_error("masked model: originals/positions length mismatch");
          for (int64_t p : inst.mask_positions)
            if (p < 0 || static_cast<size_t>(p) >= n)
              throw index_error("mask position outside sequence");
          int hm = tape.gather_rows(h, inst.mask_positions);
          int logits = tape.add_bias(tape.matmul(hm, mlm_w), mlm_b);
          detail::add_loss(tape, total,
                           tape.ls_ce(logits, inst.mask_originals, eps));
          inst_weight += static_cast<double>(inst.mask_positions.size());
        }
        if (spec.with_nsp) {
          int h0 = tape.gather_rows(h, {0});
          int logits = tape.add_bias(tape.matmul(h0, nsp_w), nsp_b);
          // Plain cross entropy for the two-way sentence label.
          detail::add_loss(tape, total,
                           tape.ls_ce(logits, {inst.label}, T(0)));
          inst_weight += 1.0;
        }
        weight +=
            policy == WeightPolicy::sentences ? 1.0 : inst_weight;
      }
      break;
    }
  }

  fr.loss_node = total ? *total : tape.leaf(Mat<T>(1, 1));
  fr.loss_sum = static_cast<double>(tape.val(fr.loss_node).at(0, 0));
  fr.weight = weight;
  return fr;
}

// Runs backward and flattens d(loss_sum)/d(theta) in canonical parameter
// order, widened to f64 for aggregation.
template <class T>
std::vector<double> backward_gradients(ForwardResult<T>& fr,
                                       const Parameters<T>& params) {
  fr.tape.backward(fr.loss_node);
  std::vector<double> flat;
  flat.reserve(params.flat_size());
  for (size_t i = 0; i < params.v.size(); ++i) {
    const Mat<T>& g = fr.tape.grad(fr.param_nodes[i]);
    if (!g.same_shape(params.v[i].m))
      throw shape_error("gradient shape mismatch for " + params.v[i].name);
    for (T x : g.d) flat.push_back(static_cast<double>(x));
  }
  return flat;
}

}  // namespace hetpar
