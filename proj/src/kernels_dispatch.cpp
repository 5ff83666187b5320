#include <atomic>
#include <cstdlib>
#include <cstring>

#include "hetpar/kernels.hpp"

// Runtime ISA selection. Order of precedence: set_active() (tests), the
// HETPAR_ISA environment variable, CPU detection. The selected path never
// changes results; only throughput.

namespace hetpar::kern {

bool cpu_has_avx2() { return __builtin_cpu_supports("avx2") != 0; }

namespace {

isa resolve_default() {
  const char* e = std::getenv("HETPAR_ISA");
  if (e) {
    if (std::strcmp(e, "scalar") == 0) return isa::scalar;
    if (std::strcmp(e, "avx2") == 0 && cpu_has_avx2()) return isa::avx2;
  }
  return cpu_has_avx2() ? isa::avx2 : isa::scalar;
}

std::atomic<int> g_active{-1};

}  // namespace

isa active() {
  int v = g_active.load(std::memory_order_relaxed);
  if (v < 0) {
    v = static_cast<int>(resolve_default());
    g_active.store(v, std::memory_order_relaxed);
  }
  return static_cast<isa>(v);
}

void set_active(isa k) {
  if (k == isa::avx2 && !cpu_has_avx2()) k = isa::scalar;
  g_active.store(static_cast<int>(k), std::memory_order_relaxed);
}

#define HETPAR_KERN_DISPATCH(T)                                               \
  T dot(const T* a, const T* b, size_t n) {                                   \
    return active() == isa::avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n); \
  }                                                                           \
  T sum(const T* a, size_t n) {                                               \
    return active() == isa::avx2 ? avx2::sum(a, n) : scalar::sum(a, n);       \
  }                                                                           \
  T maxv(const T* a, size_t n) {                                              \
    return active() == isa::avx2 ? avx2::maxv(a, n) : scalar::maxv(a, n);     \
  }                                                                           \
  void add(const T* a, const T* b, T* out, size_t n) {                        \
    active() == isa::avx2 ? avx2::add(a, b, out, n)                           \
                          : scalar::add(a, b, out, n);                        \
  }                                                                           \
  void scale(const T* a, T s, T* out, size_t n) {                             \
    active() == isa::avx2 ? avx2::scale(a, s, out, n)                         \
                          : scalar::scale(a, s, out, n);                      \
  }                                                                           \
  void axpy(T alpha, const T* x, T* y, size_t n) {                            \
    active() == isa::avx2 ? avx2::axpy(alpha, x, y, n)                        \
                          : scalar::axpy(alpha, x, y, n);                     \
  }                                                                           \
  void relu(const T* a, T* out, size_t n) {                                   \
    active() == isa::avx2 ? avx2::relu(a, out, n) : scalar::relu(a, out, n);  \
  }                                                                           \
  void relu_bwd(const T* a, const T* g, T* da, size_t n) {                    \
    active() == isa::avx2 ? avx2::relu_bwd(a, g, da, n)                       \
                          : scalar::relu_bwd(a, g, da, n);                    \
  }                                                                           \
  void sgd_update(T* p, const T* g, size_t n, T lr) {                         \
    active() == isa::avx2 ? avx2::sgd_update(p, g, n, lr)                     \
                          : scalar::sgd_update(p, g, n, lr);                  \
  }                                                                           \
  void adam_update(T* p, T* m, T* v, const T* g, size_t n, T lr, T b1, T b2,  \
                   T eps, T c1, T c2) {                                       \
    active() == isa::avx2                                                     \
        ? avx2::adam_update(p, m, v, g, n, lr, b1, b2, eps, c1, c2)           \
        : scalar::adam_update(p, m, v, g, n, lr, b1, b2, eps, c1, c2);        \
  }

HETPAR_KERN_DISPATCH(float)
HETPAR_KERN_DISPATCH(double)

#undef HETPAR_KERN_DISPATCH

}  // namespace hetpar::kern
