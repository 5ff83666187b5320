#pragma once

#include <cstddef>

// Array kernels in two interchangeable implementations: portable scalar and
// AVX2. Both follow one accumulation contract so results are bit-identical:
//   - reductions run L independent lane accumulators (L = 4 for f64, 8 for
//     f32) over the leading multiple-of-L prefix, fold lanes left-to-right,
//     then append tail elements in order;
//   - elementwise kernels use no fused multiply-add (the build also disables
//     FP contraction globally);
//   - sqrt and divide are IEEE correctly-rounded in both paths.
// Dispatch picks AVX2 when the CPU supports it; HETPAR_ISA={scalar,avx2}
// overrides, set_active() pins it for tests. Results never depend on the
// choice.

namespace hetpar::kern {

enum class isa { scalar, avx2 };

bool cpu_has_avx2();
isa active();
void set_active(isa k);

template <class T>
constexpr int lanes() {
  return sizeof(T) == 8 ? 4 : 8;
}

template <class T, int L>
inline T fold_sum(const T* acc) {
  T s = acc[0];
  for (int i = 1; i < L; ++i) s += acc[i];
  return s;
}

template <class T, int L>
inline T fold_max(const T* acc) {
  T s = acc[0];
  for (int i = 1; i < L; ++i) s = acc[i] > s ? acc[i] : s;
  return s;
}

#define HETPAR_KERN_DECL(T)                                                  \
  T dot(const T* a, const T* b, size_t n);                                   \
  T sum(const T* a, size_t n);                                               \
  T maxv(const T* a, size_t n);                                              \
  void add(const T* a, const T* b, T* out, size_t n);                        \
  void scale(const T* a, T s, T* out, size_t n);                             \
  void axpy(T alpha, const T* x, T* y, size_t n);                            \
  void relu(const T* a, T* out, size_t n);                                   \
  void relu_bwd(const T* a, const T* g, T* da, size_t n);                    \
  void sgd_update(T* p, const T* g, size_t n, T lr);                         \
  void adam_update(T* p, T* m, T* v, const T* g, size_t n, T lr, T b1, T b2, \
                   T eps, T c1, T c2);

namespace scalar {
HETPAR_KERN_DECL(float)
HETPAR_KERN_DECL(double)
}  // namespace scalar

namespace avx2 {
HETPAR_KERN_DECL(float)
HETPAR_KERN_DECL(double)
}  // namespace avx2

HETPAR_KERN_DECL(float)
HETPAR_KERN_DECL(double)

#undef HETPAR_KERN_DECL

}  // namespace hetpar::kern
