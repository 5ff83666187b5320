#pragma once

#include <cmath>
#include <functional>

#include "hetpar/tensor.hpp"

namespace hetpar {

// Central difference (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate of theta.
// f must be a pure scalar function of the matrix.
template <class T, class F>
Mat<T> finite_difference_gradient(F&& f, const Mat<T>& theta, T h) {
  if (!(h > T(0))) throw config_error("finite differences need h > 0");
  Mat<T> g(theta.rows, theta.cols);
  Mat<T> x = theta;
  for (size_t i = 0; i < x.size(); ++i) {
    T orig = x.d[i];
    x.d[i] = orig + h;
    double fp = static_cast<double>(f(x));
    x.d[i] = orig - h;
    double fm = static_cast<double>(f(x));
    x.d[i] = orig;
    g.d[i] = static_cast<T>((fp - fm) / (2.0 * static_cast<double>(h)));
  }
  return g;
}

// Relative error with a unit floor: |a-b| / max(|a|, |b|, 1). The floor keeps
// coordinates with near-zero gradients from reporting noise as error.
inline double rel_err(double a, double b) {
  double denom = std::max(std::max(std::abs(a), std::abs(b)), 1.0);
  return std::abs(a - b) / denom;
}

}  // namespace hetpar
