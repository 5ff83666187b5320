#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hetpar/common.hpp"
#include "hetpar/kernels.hpp"

namespace hetpar {

// Dense row-major matrix. All model math is rank-2; rank-1 tensors travel as
// 1xN rows. Element type is float or double.
template <class T>
struct Mat {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<T> d;

  Mat() = default;
  Mat(size_t r, size_t c) : rows(r), cols(c), d(r * c, T(0)) {}
  Mat(size_t r, size_t c, std::vector<T> data)
      : rows(r), cols(c), d(std::move(data)) {
    if (d.size() != r * c) throw shape_error("data length != rows*cols");
  }

  size_t size() const { return rows * cols; }
  T* row(size_t i) { return d.data() + i * cols; }
  const T* row(size_t i) const { return d.data() + i * cols; }
  T& at(size_t i, size_t j) { return d[i * cols + j]; }
  T at(size_t i, size_t j) const { return d[i * cols + j]; }
  bool same_shape(const Mat& o) const {
    return rows == o.rows && cols == o.cols;
  }
  void zero() { std::fill(d.begin(), d.end(), T(0)); }
};

template <class T>
void assert_finite(const Mat<T>& m, const char* what) {
  for (T x : m.d)
    if (!std::isfinite(static_cast<double>(x)))
      throw numeric_error(std::string("non-finite value in ") + what);
}

// C += A * B. Accumulation order: k ascending per output row, so the result
// is a deterministic left fold regardless of kernel ISA.
template <class T>
void matmul_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
    throw shape_error("matmul: " + std::to_string(a.rows) + "x" +
                      std::to_string(a.cols) + " * " + std::to_string(b.rows) +
                      "x" + std::to_string(b.cols));
  for (size_t i = 0; i < a.rows; ++i) {
    T* ci = c.row(i);
    for (size_t k = 0; k < a.cols; ++k)
      kern::axpy(a.at(i, k), b.row(k), ci, b.cols);
  }
}

// C += A * B^T where B is stored untransposed (n x k).
template <class T>
void matmul_tb_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
    throw shape_error("matmul_tb: " + std::to_string(a.rows) + "x" +
                      std::to_string(a.cols) + " * (" + std::to_string(b.rows) +
                      "x" + std::to_string(b.cols) + ")^T");
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t j = 0; j < b.rows; ++j)
      c.at(i, j) += kern::dot(a.row(i), b.row(j), a.cols);
}

// C += A^T * B (A stored untransposed, m x k; result k x n).
template <class T>
void matmul_ta_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    throw shape_error("matmul_ta shape");
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t k = 0; k < a.cols; ++k)
      kern::axpy(a.at(i, k), b.row(i), c.row(k), b.cols);
}

template <class T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> c(a.rows, b.cols);
  matmul_acc(a, b, c);
  return c;
}

}  // namespace hetpar
