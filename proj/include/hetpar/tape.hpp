#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hetpar/common.hpp"
#include "hetpar/kernels.hpp"
#include "hetpar/tensor.hpp"

namespace hetpar {

// Reverse-mode tape. Nodes are recorded in creation order, which is by
// construction a topological order; backward() walks them in exact reverse
// and accumulates gradients additively at fan-out. The primitive set is
// deliberately small; every backward rule is finite-difference checked.
template <class T>
class Tape {
 public:
  enum class Op : uint8_t {
    leaf,
    matmul,       // a * b, or a * b^T when trans_b
    add,          // a + b, same shape
    scale,        // a * c0
    add_bias,     // a (m x n) + broadcast b (1 x n)
    relu,
    softmax_rows,
    gather_rows,  // rows of a selected by idx (embedding lookup)
    concat_cols,  // [a | b]
    ls_ce,        // label-smoothed cross entropy sum; idx = targets, c0 = eps
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    bool trans_b = false;
    T c0 = T(0);
    std::vector<int64_t> idx;
    Mat<T> val;
    Mat<T> grad;
  };

  const Mat<T>& val(int id) const { return nodes_[check(id)].val; }
  const Mat<T>& grad(int id) const { return nodes_[check(id)].grad; }
  size_t size() const { return nodes_.size(); }

  int leaf(Mat<T> v) {
    Node n;
    n.op = Op::leaf;
    n.val = std::move(v);
    return push(std::move(n), "leaf");
  }

  int matmul(int a, int b, bool trans_b = false) {
    Node n;
    n.op = Op::matmul;
    n.a = check(a);
    n.b = check(b);
    n.trans_b = trans_b;
    const Mat<T>& A = nodes_[a].val;
    const Mat<T>& B = nodes_[b].val;
    if (trans_b) {
      n.val = Mat<T>(A.rows, B.rows);
      matmul_tb_acc(A, B, n.val);
    } else {
      n.val = Mat<T>(A.rows, B.cols);
      matmul_acc(A, B, n.val);
    }
    return push(std::move(n), "matmul");
  }

  int add(int a, int b) {
    Node n;
    n.op = Op::add;
    n.a = check(a);
    n.b = check(b);
    const Mat<T>& A = nodes_[a].val;
    const Mat<T>& B = nodes_[b].val;
    if (!A.same_shape(B)) throw shape_error("add: operand shapes differ");
    n.val = Mat<T>(A.rows, A.cols);
    kern::add(A.d.data(), B.d.data(), n.val.d.data(), A.size());
    return push(std::move(n), "add");
  }

  int scale(int a, T c) {
    Node n;
    n.op = Op::scale;
    n.a = check(a);
    n.c0 = c;
    const Mat<T>& A = nodes_[a].val;
    n.val = Mat<T>(A.rows, A.cols);
    kern::scale(A.d.data(), c, n.val.d.data(), A.size());
    return push(std::move(n), "scale");
  }

  int add_bias(int a, int b) {
    Node n;
    n.op = Op::add_bias;
    n.a = check(a);
    n.b = check(b);
    const Mat<T>& A = nodes_[a].val;
    const Mat<T>& B = nodes_[b].val;
    if (B.rows != 1 || B.cols != A.cols)
      throw shape_error("add_bias: bias must be 1 x cols(a)");
    n.val = Mat<T>(A.rows, A.cols);
    for (size_t i = 0; i < A.rows; ++i)
      kern::add(A.row(i), B.row(0), n.val.row(i), A.cols);
    return push(std::move(n), "add_bias");
  }

  int relu(int a) {
    Node n;
    n.op = Op::relu;
    n.a = check(a);
    const Mat<T>& A = nodes_[a].val;
    n.val = Mat<T>(A.rows, A.cols);
    kern::relu(A.d.data(), n.val.d.data(), A.size());
    return push(std::move(n), "relu");
  }

  int softmax_rows(int a) {
    Node n;
    n.op = Op::softmax_rows;
    n.a = check(a);
    const Mat<T>& A = nodes_[a].val;
    n.val = Mat<T>(A.rows, A.cols);
    if (A.cols == 0) throw shape_error("softmax_rows: empty rows");
    for (size_t i = 0; i < A.rows; ++i) {
      const T* zi = A.row(i);
      T* si = n.val.row(i);
      T mx = kern::maxv(zi, A.cols);
      for (size_t j = 0; j < A.cols; ++j)
        si[j] = std::exp(zi[j] - mx);
      T se = kern::sum(si, A.cols);
      for (size_t j = 0; j < A.cols; ++j) si[j] = si[j] / se;
    }
    return push(std::move(n), "softmax_rows");
  }

  // Gathers rows idx[r] of node a; doubles as embedding lookup when a is an
  // embedding table. Backward scatter-adds into the gathered rows.
  int gather_rows(int a, std::vector<int64_t> idx) {
    Node n;
    n.op = Op::gather_rows;
    n.a = check(a);
    const Mat<T>& A = nodes_[a].val;
    n.val = Mat<T>(idx.size(), A.cols);
    for (size_t r = 0; r < idx.size(); ++r) {
      int64_t id = idx[r];
      if (id < 0 || static_cast<size_t>(id) >= A.rows)
        throw index_error("gather_rows: row " + std::to_string(id) +
                          " outside [0," + std::to_string(A.rows) + ")");
      std::copy(A.row(id), A.row(id) + A.cols, n.val.row(r));
    }
    n.idx = std::move(idx);
    return push(std::move(n), "gather_rows");
  }

  int concat_cols(int a, int b) {
    Node n;
    n.op = Op::concat_cols;
    n.a = check(a);
    n.b = check(b);
    const Mat<T>& A = nodes_[a].val;
    const Mat<T>& B = nodes_[b].val;
    if (A.rows != B.rows) throw shape_error("concat_cols: row counts differ");
    n.val = Mat<T>(A.rows, A.cols + B.cols);
    for (size_t i = 0; i < A.rows; ++i) {
      std::copy(A.row(i), A.row(i) + A.cols, n.val.row(i));
      std::copy(B.row(i), B.row(i) + B.cols, n.val.row(i) + A.cols);
    }
    return push(std::move(n), "concat_cols");
  }

  // Label-smoothed cross entropy over logit rows; returns the 1x1 UNNORMALIZED
  // sum of per-row losses. Per row with smoothing eps and vocabulary V:
  //   loss = lse(z) - (1-eps) * z_target - (eps/V) * sum_c z_c
  int ls_ce(int logits, std::vector<int64_t> targets, T eps) {
    Node n;
    n.op = Op::ls_ce;
    n.a = check(logits);
    n.c0 = eps;
    const Mat<T>& Z = nodes_[logits].val;
    if (targets.size() != Z.rows)
      throw shape_error("ls_ce: one target per logit row");
    if (!(eps >= T(0) && eps < T(1)))
      throw config_error("ls_ce: eps outside [0,1)");
    const T V = static_cast<T>(Z.cols);
    T total = T(0);
    std::vector<T> e(Z.cols);
    for (size_t i = 0; i < Z.rows; ++i) {
      int64_t t = targets[i];
      if (t < 0 || static_cast<size_t>(t) >= Z.cols)
        throw index_error("ls_ce: target " + std::to_string(t) +
                          " outside [0," + std::to_string(Z.cols) + ")");
      const T* zi = Z.row(i);
      T mx = kern::maxv(zi, Z.cols);
      for (size_t j = 0; j < Z.cols; ++j) e[j] = std::exp(zi[j] - mx);
      T lse = mx + std::log(kern::sum(e.data(), Z.cols));
      T zsum = kern::sum(zi, Z.cols);
      total += lse - (T(1) - eps) * zi[t] - (eps / V) * zsum;
    }
    n.idx = std::move(targets);
    n.val = Mat<T>(1, 1);
    n.val.at(0, 0) = total;
    return push(std::move(n), "ls_ce");
  }

  // Seeds d(loss)/d(loss) = 1 and walks nodes in reverse creation order.
  void backward(int loss) {
    check(loss);
    Node& ln = nodes_[loss];
    if (ln.val.rows != 1 || ln.val.cols != 1)
      throw shape_error("backward: loss node must be 1x1");
    ln.grad.at(0, 0) = T(1);
    for (int id = loss; id >= 0; --id) backward_node(nodes_[id]);
  }

 private:
  int check(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
      throw index_error("tape: bad node id " + std::to_string(id));
    return id;
  }

  int push(Node&& n, const char* what) {
    assert_finite(n.val, what);
    n.grad = Mat<T>(n.val.rows, n.val.cols);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void backward_node(Node& n) {
    const Mat<T>& g = n.grad;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        if (n.trans_b) {
          matmul_acc(g, B.val, A.grad);      // dA += g * B
          matmul_ta_acc(g, A.val, B.grad);   // dB += g^T * A
        } else {
          matmul_tb_acc(g, B.val, A.grad);   // dA += g * B^T
          matmul_ta_acc(A.val, g, B.grad);   // dB += A^T * g
        }
        break;
      }
      case Op::add: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        kern::axpy(T(1), g.d.data(), A.grad.d.data(), g.size());
        kern::axpy(T(1), g.d.data(), B.grad.d.data(), g.size());
        break;
      }
      case Op::scale:
        kern::axpy(n.c0, g.d.data(), nodes_[n.a].grad.d.data(), g.size());
        break;
      case Op::add_bias: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        kern::axpy(T(1), g.d.data(), A.grad.d.data(), g.size());
        for (size_t i = 0; i < g.rows; ++i)
          kern::axpy(T(1), g.row(i), B.grad.row(0), g.cols);
        break;
      }
      case Op::relu:
        kern::relu_bwd(nodes_[n.a].val.d.data(), g.d.data(),
                       nodes_[n.a].grad.d.data(), g.size());
        break;
      case Op::softmax_rows: {
        Node& A = nodes_[n.a];
        const Mat<T>& S = n.val;
        for (size_t i = 0; i < S.rows; ++i) {
          T inner = kern::dot(g.row(i), S.row(i), S.cols);
          T* da = A.grad.row(i);
          const T* gi = g.row(i);
          const T* si = S.row(i);
          for (size_t j = 0; j < S.cols; ++j)
            da[j] += si[j] * (gi[j] - inner);
        }
        break;
      }
      case Op::gather_rows: {
        Node& A = nodes_[n.a];
        for (size_t r = 0; r < n.idx.size(); ++r)
          kern::axpy(T(1), g.row(r), A.grad.row(n.idx[r]), g.cols);
        break;
      }
      case Op::concat_cols: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        for (size_t i = 0; i < g.rows; ++i) {
          kern::axpy(T(1), g.row(i), A.grad.row(i), A.val.cols);
          kern::axpy(T(1), g.row(i) + A.val.cols, B.grad.row(i), B.val.cols);
        }
        break;
      }
      case Op::ls_ce: {
        Node& A = nodes_[n.a];
        const Mat<T>& Z = A.val;
        const T go = g.at(0, 0);
        if (go == T(0)) break;
        const T eps = n.c0;
        const T V = static_cast<T>(Z.cols);
        std::vector<T> p(Z.cols);
        for (size_t i = 0; i < Z.rows; ++i) {
          const T* zi = Z.row(i);
          T mx = kern::maxv(zi, Z.cols);
          for (size_t j = 0; j < Z.cols; ++j) p[j] = std::exp(zi[j] - mx);
          T se = kern::sum(p.data(), Z.cols);
          T* da = A.grad.row(i);
          for (size_t j = 0; j < Z.cols; ++j) {
            T qj = (static_cast<int64_t>(j) == n.idx[i]) ? (T(1) - eps) : T(0);
            da[j] += go * (p[j] / se - qj - eps / V);
          }
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace hetpar
