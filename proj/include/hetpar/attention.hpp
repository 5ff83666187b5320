#pragma once

#include <cmath>
#include <vector>

#include "hetpar/common.hpp"
#include "hetpar/tape.hpp"
#include "hetpar/tensor.hpp"

namespace hetpar {

// softmax(Q K^T / sqrt(d_k)) V. Output rows are convex combinations of V's
// rows; the scale uses the key dimension of the inputs as given.
template <class T>
int scaled_dot_product_attention(Tape<T>& tape, int q, int k, int v) {
  const Mat<T>& Q = tape.val(q);
  const Mat<T>& K = tape.val(k);
  const Mat<T>& V = tape.val(v);
  if (Q.cols != K.cols) throw shape_error("attention: q/k key dims differ");
  if (K.rows != V.rows) throw shape_error("attention: k/v row counts differ");
  int scores = tape.matmul(q, k, /*trans_b=*/true);
  int scaled =
      tape.scale(scores, T(1) / static_cast<T>(std::sqrt(double(Q.cols))));
  int attn = tape.softmax_rows(scaled);
  return tape.matmul(attn, v);
}

// Concat(head_1, ..., head_h) W_O with per-head projections
// head_i = attention(x_q W_i^Q, x_k W_i^K, x_v W_i^V).
template <class T>
int multi_head_attention(Tape<T>& tape, int xq, int xk, int xv,
                         const std::vector<int>& wq, const std::vector<int>& wk,
                         const std::vector<int>& wv, int wo, int heads) {
  if (heads < 1) throw config_error("attention: head count must be >= 1");
  size_t d_model = tape.val(xq).cols;
  if (d_model % static_cast<size_t>(heads) != 0)
    throw config_error("attention: model dim " + std::to_string(d_model) +
                       " not divisible by " + std::to_string(heads) + " heads");
  if (wq.size() != static_cast<size_t>(heads) || wk.size() != wq.size() ||
      wv.size() != wq.size())
    throw config_error("attention: projection count != head count");
  int cat = -1;
  for (int i = 0; i < heads; ++i) {
    int head = scaled_dot_product_attention(tape, tape.matmul(xq, wq[i]),
                                            tape.matmul(xk, wk[i]),
                                            tape.matmul(xv, wv[i]));
    cat = (i == 0) ? head : tape.concat_cols(cat, head);
  }
  return tape.matmul(cat, wo);
}

// entry(pos, 2i) = sin(pos / 10000^{2i/d}), entry(pos, 2i+1) = cos(same).
template <class T>
Mat<T> sinusoidal_positions(size_t seq_len, size_t d_model) {
  if (d_model % 2 != 0)
    throw config_error("sinusoidal_positions: d_model must be even");
  Mat<T> out(seq_len, d_model);
  for (size_t pos = 0; pos < seq_len; ++pos)
    for (size_t i = 0; 2 * i < d_model; ++i) {
      double angle = static_cast<double>(pos) /
                     std::pow(10000.0, (2.0 * static_cast<double>(i)) /
                                           static_cast<double>(d_model));
      out.at(pos, 2 * i) = static_cast<T>(std::sin(angle));
      out.at(pos, 2 * i + 1) = static_cast<T>(std::cos(angle));
    }
  return out;
}

}  // namespace hetpar
