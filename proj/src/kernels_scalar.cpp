#include <cmath>
#include <limits>

#include "hetpar/kernels.hpp"

// Scalar reference kernels. Reductions mirror the vector lane structure
// exactly (see kernels.hpp); elementwise loops are plain per-index code.

namespace hetpar::kern::scalar {

namespace {

template <class T>
T dot_impl(const T* a, const T* b, size_t n) {
  constexpr int L = lanes<T>();
  T acc[L] = {};
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L)
    for (int j = 0; j < L; ++j) acc[j] += a[i + j] * b[i + j];
  T s = fold_sum<T, L>(acc);
  for (size_t i = n0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class T>
T sum_impl(const T* a, size_t n) {
  constexpr int L = lanes<T>();
  T acc[L] = {};
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L)
    for (int j = 0; j < L; ++j) acc[j] += a[i + j];
  T s = fold_sum<T, L>(acc);
  for (size_t i = n0; i < n; ++i) s += a[i];
  return s;
}

template <class T>
T maxv_impl(const T* a, size_t n) {
  constexpr int L = lanes<T>();
  T acc[L];
  for (int j = 0; j < L; ++j) acc[j] = -std::numeric_limits<T>::infinity();
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L)
    for (int j = 0; j < L; ++j) acc[j] = a[i + j] > acc[j] ? a[i + j] : acc[j];
  T s = fold_max<T, L>(acc);
  for (size_t i = n0; i < n; ++i) s = a[i] > s ? a[i] : s;
  return s;
}

}  // namespace

#define HETPAR_KERN_SCALAR(T)                                                 \
  T dot(const T* a, const T* b, size_t n) { return dot_impl(a, b, n); }       \
  T sum(const T* a, size_t n) { return sum_impl(a, n); }                      \
  T maxv(const T* a, size_t n) { return maxv_impl(a, n); }                    \
  void add(const T* a, const T* b, T* out, size_t n) {                        \
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];                      \
  }                                                                           \
  void scale(const T* a, T s, T* out, size_t n) {                             \
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * s;                         \
  }                                                                           \
  void axpy(T alpha, const T* x, T* y, size_t n) {                            \
    for (size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];                \
  }                                                                           \
  void relu(const T* a, T* out, size_t n) {                                   \
    for (size_t i = 0; i < n; ++i) out[i] = a[i] > T(0) ? a[i] : T(0);        \
  }                                                                           \
  void relu_bwd(const T* a, const T* g, T* da, size_t n) {                    \
    for (size_t i = 0; i < n; ++i) da[i] = da[i] + (a[i] > T(0) ? g[i] : T(0)); \
  }                                                                           \
  void sgd_update(T* p, const T* g, size_t n, T lr) {                         \
    for (size_t i = 0; i < n; ++i) p[i] = p[i] - lr * g[i];                   \
  }                                                                           \
  void adam_update(T* p, T* m, T* v, const T* g, size_t n, T lr, T b1, T b2,  \
                   T eps, T c1, T c2) {                                       \
    for (size_t i = 0; i < n; ++i) {                                          \
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];                                  \
      v[i] = b2 * v[i] + (T(1) - b2) * (g[i] * g[i]);                         \
      T mh = m[i] * c1;                                                       \
      T vh = v[i] * c2;                                                       \
      p[i] = p[i] - lr * (mh / (std::sqrt(vh) + eps));                        \
    }                                                                         \
  }

HETPAR_KERN_SCALAR(float)
HETPAR_KERN_SCALAR(double)

#undef HETPAR_KERN_SCALAR

}  // namespace hetpar::kern::scalar
