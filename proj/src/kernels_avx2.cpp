#include <immintrin.h>

#include <cmath>
#include <limits>

#include "hetpar/kernels.hpp"

// AVX2 kernels. This is the only translation unit compiled with -mavx2; the
// dispatcher guards every call with a CPU check. Compare-and-blend keeps
// max/relu bitwise equal to the scalar ternary even for signed zeros, and no
// FMA is emitted anywhere.

namespace hetpar::kern::avx2 {

// ---------------------------------------------------------------- float64

double dot(const double* a, const double* b, size_t n) {
  constexpr int L = 4;
  __m256d acc = _mm256_setzero_pd();
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256d x = _mm256_loadu_pd(a + i);
    __m256d y = _mm256_loadu_pd(b + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(x, y));
  }
  double t[L];
  _mm256_storeu_pd(t, acc);
  double s = fold_sum<double, L>(t);
  for (size_t i = n0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum(const double* a, size_t n) {
  constexpr int L = 4;
  __m256d acc = _mm256_setzero_pd();
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L)
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double t[L];
  _mm256_storeu_pd(t, acc);
  double s = fold_sum<double, L>(t);
  for (size_t i = n0; i < n; ++i) s += a[i];
  return s;
}

double maxv(const double* a, size_t n) {
  constexpr int L = 4;
  __m256d acc = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256d x = _mm256_loadu_pd(a + i);
    __m256d gt = _mm256_cmp_pd(x, acc, _CMP_GT_OQ);
    acc = _mm256_blendv_pd(acc, x, gt);
  }
  double t[L];
  _mm256_storeu_pd(t, acc);
  double s = fold_max<double, L>(t);
  for (size_t i = n0; i < n; ++i) s = a[i] > s ? a[i] : s;
  return s;
}

void add(const double* a, const double* b, double* out, size_t n) {
  constexpr int L = 4;
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (size_t i = n0; i < n; ++i) out[i] = a[i] + b[i];
}

void scale(const double* a, double s, double* out, size_t n) {
  constexpr int L = 4;
  __m256d sv = _mm256_set1_pd(s);
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
  for (size_t i = n0; i < n; ++i) out[i] = a[i] * s;
}

void axpy(double alpha, const double* x, double* y, size_t n) {
  constexpr int L = 4;
  __m256d av = _mm256_set1_pd(alpha);
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (size_t i = n0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void relu(const double* a, double* out, size_t n) {
  constexpr int L = 4;
  __m256d zero = _mm256_setzero_pd();
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256d x = _mm256_loadu_pd(a + i);
    __m256d gt = _mm256_cmp_pd(x, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(gt, x));
  }
  for (size_t i = n0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_bwd(const double* a, const double* g, double* da, size_t n) {
  constexpr int L = 4;
  __m256d zero = _mm256_setzero_pd();
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256d gt = _mm256_cmp_pd(_mm256_loadu_pd(a + i), zero, _CMP_GT_OQ);
    __m256d gm = _mm256_and_pd(gt, _mm256_loadu_pd(g + i));
    _mm256_storeu_pd(da + i, _mm256_add_pd(_mm256_loadu_pd(da + i), gm));
  }
  for (size_t i = n0; i < n; ++i) da[i] = da[i] + (a[i] > 0.0 ? g[i] : 0.0);
}

void sgd_update(double* p, const double* g, size_t n, double lr) {
  constexpr int L = 4;
  __m256d lrv = _mm256_set1_pd(lr);
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256d step = _mm256_mul_pd(lrv, _mm256_loadu_pd(g + i));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  for (size_t i = n0; i < n; ++i) p[i] = p[i] - lr * g[i];
}

void adam_update(double* p, double* m, double* v, const double* g, size_t n,
                 double lr, double b1, double b2, double eps, double c1,
                 double c2) {
  constexpr int L = 4;
  __m256d b1v = _mm256_set1_pd(b1), ob1 = _mm256_set1_pd(1.0 - b1);
  __m256d b2v = _mm256_set1_pd(b2), ob2 = _mm256_set1_pd(1.0 - b2);
  __m256d lrv = _mm256_set1_pd(lr), epsv = _mm256_set1_pd(eps);
  __m256d c1v = _mm256_set1_pd(c1), c2v = _mm256_set1_pd(c2);
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256d gv = _mm256_loadu_pd(g + i);
    __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1v, _mm256_loadu_pd(m + i)),
                               _mm256_mul_pd(ob1, gv));
    __m256d g2 = _mm256_mul_pd(gv, gv);
    __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2v, _mm256_loadu_pd(v + i)),
                               _mm256_mul_pd(ob2, g2));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    __m256d mh = _mm256_mul_pd(mv, c1v);
    __m256d vh = _mm256_mul_pd(vv, c2v);
    __m256d den = _mm256_add_pd(_mm256_sqrt_pd(vh), epsv);
    __m256d step = _mm256_mul_pd(lrv, _mm256_div_pd(mh, den));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  for (size_t i = n0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * (g[i] * g[i]);
    double mh = m[i] * c1;
    double vh = v[i] * c2;
    p[i] = p[i] - lr * (mh / (std::sqrt(vh) + eps));
  }
}

// ---------------------------------------------------------------- float32

float dot(const float* a, const float* b, size_t n) {
  constexpr int L = 8;
  __m256 acc = _mm256_setzero_ps();
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256 x = _mm256_loadu_ps(a + i);
    __m256 y = _mm256_loadu_ps(b + i);
    acc = _mm256_add_ps(acc, _mm256_mul_ps(x, y));
  }
  float t[L];
  _mm256_storeu_ps(t, acc);
  float s = fold_sum<float, L>(t);
  for (size_t i = n0; i < n; ++i) s += a[i] * b[i];
  return s;
}

float sum(const float* a, size_t n) {
  constexpr int L = 8;
  __m256 acc = _mm256_setzero_ps();
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L)
    acc = _mm256_add_ps(acc, _mm256_loadu_ps(a + i));
  float t[L];
  _mm256_storeu_ps(t, acc);
  float s = fold_sum<float, L>(t);
  for (size_t i = n0; i < n; ++i) s += a[i];
  return s;
}

float maxv(const float* a, size_t n) {
  constexpr int L = 8;
  __m256 acc = _mm256_set1_ps(-std::numeric_limits<float>::infinity());
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256 x = _mm256_loadu_ps(a + i);
    __m256 gt = _mm256_cmp_ps(x, acc, _CMP_GT_OQ);
    acc = _mm256_blendv_ps(acc, x, gt);
  }
  float t[L];
  _mm256_storeu_ps(t, acc);
  float s = fold_max<float, L>(t);
  for (size_t i = n0; i < n; ++i) s = a[i] > s ? a[i] : s;
  return s;
}

void add(const float* a, const float* b, float* out, size_t n) {
  constexpr int L = 8;
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L)
    _mm256_storeu_ps(out + i,
                     _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (size_t i = n0; i < n; ++i) out[i] = a[i] + b[i];
}

void scale(const float* a, float s, float* out, size_t n) {
  constexpr int L = 8;
  __m256 sv = _mm256_set1_ps(s);
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), sv));
  for (size_t i = n0; i < n; ++i) out[i] = a[i] * s;
}

void axpy(float alpha, const float* x, float* y, size_t n) {
  constexpr int L = 8;
  __m256 av = _mm256_set1_ps(alpha);
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256 prod = _mm256_mul_ps(av, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (size_t i = n0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void relu(const float* a, float* out, size_t n) {
  constexpr int L = 8;
  __m256 zero = _mm256_setzero_ps();
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256 x = _mm256_loadu_ps(a + i);
    __m256 gt = _mm256_cmp_ps(x, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(out + i, _mm256_and_ps(gt, x));
  }
  for (size_t i = n0; i < n; ++i) out[i] = a[i] > 0.0f ? a[i] : 0.0f;
}

void relu_bwd(const float* a, const float* g, float* da, size_t n) {
  constexpr int L = 8;
  __m256 zero = _mm256_setzero_ps();
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256 gt = _mm256_cmp_ps(_mm256_loadu_ps(a + i), zero, _CMP_GT_OQ);
    __m256 gm = _mm256_and_ps(gt, _mm256_loadu_ps(g + i));
    _mm256_storeu_ps(da + i, _mm256_add_ps(_mm256_loadu_ps(da + i), gm));
  }
  for (size_t i = n0; i < n; ++i) da[i] = da[i] + (a[i] > 0.0f ? g[i] : 0.0f);
}

void sgd_update(float* p, const float* g, size_t n, float lr) {
  constexpr int L = 8;
  __m256 lrv = _mm256_set1_ps(lr);
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256 step = _mm256_mul_ps(lrv, _mm256_loadu_ps(g + i));
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), step));
  }
  for (size_t i = n0; i < n; ++i) p[i] = p[i] - lr * g[i];
}

void adam_update(float* p, float* m, float* v, const float* g, size_t n,
                 float lr, float b1, float b2, float eps, float c1, float c2) {
  constexpr int L = 8;
  __m256 b1v = _mm256_set1_ps(b1), ob1 = _mm256_set1_ps(1.0f - b1);
  __m256 b2v = _mm256_set1_ps(b2), ob2 = _mm256_set1_ps(1.0f - b2);
  __m256 lrv = _mm256_set1_ps(lr), epsv = _mm256_set1_ps(eps);
  __m256 c1v = _mm256_set1_ps(c1), c2v = _mm256_set1_ps(c2);
  size_t n0 = n - n % L;
  for (size_t i = 0; i < n0; i += L) {
    __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_add_ps(_mm256_mul_ps(b1v, _mm256_loadu_ps(m + i)),
                              _mm256_mul_ps(ob1, gv));
    __m256 g2 = _mm256_mul_ps(gv, gv);
    __m256 vv = _mm256_add_ps(_mm256_mul_ps(b2v, _mm256_loadu_ps(v + i)),
                              _mm256_mul_ps(ob2, g2));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    __m256 mh = _mm256_mul_ps(mv, c1v);
    __m256 vh = _mm256_mul_ps(vv, c2v);
    __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vh), epsv);
    __m256 step = _mm256_mul_ps(lrv, _mm256_div_ps(mh, den));
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), step));
  }
  for (size_t i = n0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0f - b1) * g[i];
    v[i] = b2 * v[i] + (1.0f - b2) * (g[i] * g[i]);
    float mh = m[i] * c1;
    float vh = v[i] * c2;
    p[i] = p[i] - lr * (mh / (std::sqrt(vh) + eps));
  }
}

}  // namespace hetpar::kern::avx2
