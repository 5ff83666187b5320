#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hetpar/common.hpp"
#include "hetpar/kernels.hpp"
#include "hetpar/model.hpp"

namespace hetpar {

// ---------------------------------------------------------------------------
// Learning-rate schedules. `step` counts optimizer updates, starting at 1 for
// the first update; gradient accumulation therefore sees the same schedule as
// an equally sized multi-rank run.

inline double inverse_sqrt_lr(uint64_t step, size_t d_model,
                              uint64_t warmup_steps) {
  if (step == 0) throw config_error("inverse_sqrt_lr: step must be >= 1");
  if (d_model == 0) throw config_error("inverse_sqrt_lr: d_model must be >= 1");
  if (warmup_steps == 0)
    throw config_error("inverse_sqrt_lr: warmup_steps must be >= 1");
  double s = static_cast<double>(step);
  double w = static_cast<double>(warmup_steps);
  double lo = std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
  return lo / std::sqrt(static_cast<double>(d_model));
}

inline double linear_warmup_decay_lr(uint64_t step, double peak,
                                     uint64_t warmup, uint64_t total) {
  if (warmup >= total)
    throw config_error("linear_warmup_decay_lr: warmup must be < total");
  if (step > total) {
    log_warn("linear_warmup_decay_lr: step " + std::to_string(step) +
             " past total " + std::to_string(total) + ", lr clamped to 0");
    return 0.0;
  }
  if (step == 0) return 0.0;
  // The ratio is computed first so lr(warmup) == peak exactly on both
  // branches (the ratio is exactly 1.0 there).
  double s = static_cast<double>(step);
  if (step <= warmup) return peak * (s / static_cast<double>(warmup));
  return peak * (static_cast<double>(total - step) /
                 static_cast<double>(total - warmup));
}

enum class SchedulerKind : uint8_t { fixed = 0, inverse_sqrt = 1, linear = 2 };

struct SchedulerConfig {
  SchedulerKind kind = SchedulerKind::fixed;
  double peak_lr = 1e-3;   // fixed: the lr itself; linear: the peak
  size_t d_model = 512;    // inverse_sqrt only
  uint64_t warmup_steps = 4000;
  uint64_t total_steps = 1000000;  // linear only
};

inline double scheduled_lr(const SchedulerConfig& c, uint64_t step) {
  switch (c.kind) {
    case SchedulerKind::fixed:
      return c.peak_lr;
    case SchedulerKind::inverse_sqrt:
      return inverse_sqrt_lr(step, c.d_model, c.warmup_steps);
    case SchedulerKind::linear:
      return linear_warmup_decay_lr(step, c.peak_lr, c.warmup_steps,
                                    c.total_steps);
  }
  throw config_error("scheduled_lr: unknown scheduler kind");
}

// ---------------------------------------------------------------------------
// Optimizers. The caller hands in a fully normalized f64 gradient (already
// divided by the total weight); the optimizer casts to the parameter dtype
// once, in one place, so every rank performs the identical update.

enum class OptKind : uint8_t { sgd = 0, adam = 1 };

template <class T>
struct Optimizer {
  OptKind kind = OptKind::sgd;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  uint64_t t = 0;                   // applied update count (adam only)
  std::vector<std::vector<T>> m;    // aligned with Parameters::v
  std::vector<std::vector<T>> v;

  static Optimizer make_sgd() { return Optimizer{}; }

  static Optimizer make_adam(const Parameters<T>& params, double b1, double b2,
                             double e) {
    Optimizer o;
    o.kind = OptKind::adam;
    o.beta1 = b1;
    o.beta2 = b2;
    o.eps = e;
    for (const auto& en : params.v) {
      o.m.emplace_back(en.m.size(), T(0));
      o.v.emplace_back(en.m.size(), T(0));
    }
    return o;
  }

  // Applies one update in canonical parameter order. grad is the flat f64
  // gradient whose layout matches Parameters::v.
  void step(Parameters<T>& params, const std::vector<double>& grad,
            double lr) {
    size_t total = 0;
    for (const auto& en : params.v) total += en.m.size();
    if (grad.size() != total)
      throw shape_error("optimizer: gradient length " +
                        std::to_string(grad.size()) + " != parameter count " +
                        std::to_string(total));
    if (kind == OptKind::adam && m.size() != params.v.size())
      throw shape_error("optimizer: moment state does not match parameters");

    double c1 = 1.0, c2 = 1.0;
    if (kind == OptKind::adam) {
      ++t;
      c1 = 1.0 / (1.0 - std::pow(beta1, static_cast<double>(t)));
      c2 = 1.0 / (1.0 - std::pow(beta2, static_cast<double>(t)));
    }

    std::vector<T> g;
    size_t off = 0;
    for (size_t i = 0; i < params.v.size(); ++i) {
      auto& en = params.v[i];
      size_t n = en.m.size();
      g.resize(n);
      for (size_t j = 0; j < n; ++j) {
        if (!std::isfinite(grad[off + j]))
          throw numeric_error("non-finite gradient for parameter " + en.name);
        g[j] = static_cast<T>(grad[off + j]);
      }
      if (kind == OptKind::sgd) {
        kern::sgd_update(en.m.d.data(), g.data(), n, static_cast<T>(lr));
      } else {
        kern::adam_update(en.m.d.data(), m[i].data(), v[i].data(), g.data(), n,
                          static_cast<T>(lr), static_cast<T>(beta1),
                          static_cast<T>(beta2), static_cast<T>(eps),
                          static_cast<T>(c1), static_cast<T>(c2));
      }
      off += n;
    }
  }
};

// ---------------------------------------------------------------------------
// Gradient accumulation. Sums stay raw (no averaging) until flush; gradient
// addition order is the caller's call order, which the engine keeps
// rank-ordered for byte determinism.

struct Accumulator {
  explicit Accumulator(uint64_t update_freq, size_t grad_size)
      : update_freq_(update_freq), grads_(grad_size, 0.0) {
    if (update_freq == 0)
      throw config_error("accumulator: update_freq must be >= 1");
  }

  void accumulate(double loss_sum, double weight,
                  const std::vector<double>& grads) {
    if (grads.size() != grads_.size())
      throw shape_error("accumulator: gradient length mismatch");
    loss_sum_ += loss_sum;
    weight_ += weight;
    for (size_t i = 0; i < grads_.size(); ++i) grads_[i] += grads[i];
    ++count_;
  }

  uint64_t count() const { return count_; }
  uint64_t update_freq() const { return update_freq_; }
  bool ready() const { return count_ == update_freq_; }

  struct Flushed {
    double loss_sum = 0;
    double weight = 0;
    std::vector<double> grads;
  };

  // Returns the accumulated totals and resets. Flushing with nothing
  // accumulated is a caller bug.
  Flushed flush() {
    if (count_ == 0) throw config_error("accumulator: flush while empty");
    Flushed out;
    out.loss_sum = loss_sum_;
    out.weight = weight_;
    out.grads = grads_;
    loss_sum_ = 0;
    weight_ = 0;
    std::fill(grads_.begin(), grads_.end(), 0.0);
    count_ = 0;
    return out;
  }

 private:
  uint64_t update_freq_;
  double loss_sum_ = 0;
  double weight_ = 0;
  std::vector<double> grads_;
  uint64_t count_ = 0;
};

}  // namespace hetpar
