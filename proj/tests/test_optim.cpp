#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "hetpar/optim.hpp"

using namespace hetpar;

namespace {

Parameters<double> one_param(double theta) {
  Parameters<double> p;
  p.v.push_back({"theta", Mat<double>(1, 1, {theta})});
  return p;
}

}  // namespace

TEST_CASE("inverse_sqrt_lr: pinned anchors and branch meeting point") {
  CHECK(inverse_sqrt_lr(4000, 512, 4000) ==
        doctest::Approx(6.9877124296868428e-4).epsilon(1e-14));
  CHECK(inverse_sqrt_lr(1, 512, 4000) ==
        doctest::Approx(1.746928107421711e-7).epsilon(1e-14));

  // The warmup and decay branches evaluate to the same value at step=warmup.
  for (uint64_t w : {1ull, 7ull, 4000ull}) {
    double up = static_cast<double>(w) * std::pow(static_cast<double>(w), -1.5);
    double down = 1.0 / std::sqrt(static_cast<double>(w));
    CHECK(std::abs(up - down) <= 1e-15 * down);
  }
}

TEST_CASE("inverse_sqrt_lr: strictly up to warmup, strictly down after") {
  const uint64_t warmup = 20;
  double prev = 0.0;
  for (uint64_t s = 1; s <= warmup; ++s) {
    double lr = inverse_sqrt_lr(s, 64, warmup);
    CHECK(lr > prev);
    prev = lr;
  }
  for (uint64_t s = warmup + 1; s <= 50; ++s) {
    double lr = inverse_sqrt_lr(s, 64, warmup);
    CHECK(lr < prev);
    prev = lr;
  }
  CHECK_THROWS_AS(inverse_sqrt_lr(0, 512, 4000), config_error);
  CHECK_THROWS_AS(inverse_sqrt_lr(1, 512, 0), config_error);
}

TEST_CASE("linear_warmup_decay_lr: anchors, exact peak, clamp warning") {
  CHECK(linear_warmup_decay_lr(0, 1e-4, 10000, 1000000) == 0.0);
  CHECK(linear_warmup_decay_lr(10000, 1e-4, 10000, 1000000) == 1e-4);
  CHECK(linear_warmup_decay_lr(505000, 1e-4, 10000, 1000000) ==
        doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(linear_warmup_decay_lr(1000000, 1e-4, 10000, 1000000) == 0.0);
  CHECK(linear_warmup_decay_lr(2000000, 1e-4, 10000, 1000000) == 0.0);
  CHECK_THROWS_AS(linear_warmup_decay_lr(5, 1e-4, 10, 10), config_error);

  // Continuity at the warmup boundary: one-step deltas equal the segment
  // slopes (peak/warmup going up, peak/(total-warmup) going down).
  double before = linear_warmup_decay_lr(9999, 1e-4, 10000, 1000000);
  double at = linear_warmup_decay_lr(10000, 1e-4, 10000, 1000000);
  double after = linear_warmup_decay_lr(10001, 1e-4, 10000, 1000000);
  CHECK(std::abs(at - before) <= 1.01 * 1e-4 / 10000.0);
  CHECK(std::abs(after - at) <= 1.01 * 1e-4 / 990000.0);
}

TEST_CASE("scheduled_lr: dispatches per kind") {
  SchedulerConfig fixed;
  fixed.kind = SchedulerKind::fixed;
  fixed.peak_lr = 0.05;
  CHECK(scheduled_lr(fixed, 1) == 0.05);
  CHECK(scheduled_lr(fixed, 123456) == 0.05);

  SchedulerConfig inv;
  inv.kind = SchedulerKind::inverse_sqrt;
  inv.d_model = 512;
  inv.warmup_steps = 4000;
  CHECK(scheduled_lr(inv, 17) == inverse_sqrt_lr(17, 512, 4000));

  SchedulerConfig lin;
  lin.kind = SchedulerKind::linear;
  lin.peak_lr = 1e-4;
  lin.warmup_steps = 10000;
  lin.total_steps = 1000000;
  CHECK(scheduled_lr(lin, 505000) ==
        linear_warmup_decay_lr(505000, 1e-4, 10000, 1000000));
}

TEST_CASE("sgd: arithmetic and lr=0 identity") {
  auto p = one_param(1.0);
  auto opt = Optimizer<double>::make_sgd();
  opt.step(p, {2.0}, 0.5);
  CHECK(p.v[0].m.d[0] == 0.0);
  opt.step(p, {123.0}, 0.0);
  CHECK(p.v[0].m.d[0] == 0.0);
}

TEST_CASE("adam: first step moves by ~ -lr*sign(g)") {
  for (double g : {5.0, -0.01, 300.0}) {
    auto p = one_param(3.0);
    auto opt = Optimizer<double>::make_adam(p, 0.9, 0.98, 1e-9);
    opt.step(p, {g}, 0.1);
    double expect = 3.0 - 0.1 * (g > 0 ? 1.0 : -1.0);
    CHECK(std::abs(p.v[0].m.d[0] - expect) <= 1e-8);
  }
}

TEST_CASE("adam: zero gradient with zero moments leaves parameters alone") {
  auto p = one_param(1.25);
  auto opt = Optimizer<double>::make_adam(p, 0.9, 0.98, 1e-9);
  opt.step(p, {0.0}, 0.1);
  CHECK(p.v[0].m.d[0] == 1.25);
  CHECK(opt.t == 1);
}

TEST_CASE("adam: lr=0 is identity on parameters but advances t, m, v") {
  auto p = one_param(2.0);
  auto opt = Optimizer<double>::make_adam(p, 0.9, 0.98, 1e-9);
  opt.step(p, {4.0}, 0.0);
  CHECK(p.v[0].m.d[0] == 2.0);
  CHECK(opt.t == 1);
  CHECK(opt.m[0][0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(opt.v[0][0] == doctest::Approx(0.32).epsilon(1e-15));
}

TEST_CASE("adam: 10 steps on f(x)=x^2 match the scalar oracle") {
  // Oracle: hand-rolled scalar Adam, beta1=0.9 beta2=0.98 eps=1e-9 lr=0.1,
  // theta0=1, g=2*theta, bias-corrected update.
  const double oracle[10] = {
      0.90000000005,       0.800362004166137,   0.7013970355397399,
      0.6034812122002178,  0.5070670922385638,  0.41269488225894957,
      0.3210017366034379,  0.23272631317098003, 0.14870461567307533,
      0.06985241531094517};
  auto p = one_param(1.0);
  auto opt = Optimizer<double>::make_adam(p, 0.9, 0.98, 1e-9);
  for (int t = 0; t < 10; ++t) {
    double theta = p.v[0].m.d[0];
    opt.step(p, {2.0 * theta}, 0.1);
    CHECK(std::abs(p.v[0].m.d[0] - oracle[t]) <= 1e-15);
    CHECK(opt.v[0][0] >= 0.0);
  }
  CHECK(opt.t == 10);
}

TEST_CASE("adam and sgd agree on update direction for a quadratic") {
  auto ps = one_param(5.0);
  auto pa = one_param(5.0);
  auto sgd = Optimizer<double>::make_sgd();
  auto adam = Optimizer<double>::make_adam(pa, 0.9, 0.98, 1e-9);
  sgd.step(ps, {10.0}, 1e-3);
  adam.step(pa, {10.0}, 1e-3);
  CHECK(ps.v[0].m.d[0] < 5.0);
  CHECK(pa.v[0].m.d[0] < 5.0);
}

TEST_CASE("optimizer: gradient validation") {
  auto p = one_param(1.0);
  auto opt = Optimizer<double>::make_sgd();
  CHECK_THROWS_AS(opt.step(p, {1.0, 2.0}, 0.1), shape_error);
  try {
    opt.step(p, {std::numeric_limits<double>::quiet_NaN()}, 0.1);
    FAIL("expected numeric_error");
  } catch (const numeric_error& e) {
    CHECK(std::string(e.what()).find("theta") != std::string::npos);
  }
}

TEST_CASE("accumulator: sums accumulate exactly and flush resets") {
  Accumulator acc(2, 2);
  acc.accumulate(3.0, 2.0, {1.0, 2.0});
  CHECK(!acc.ready());
  acc.accumulate(5.0, 3.0, {10.0, 20.0});
  CHECK(acc.ready());
  auto out = acc.flush();
  CHECK(out.loss_sum == 8.0);
  CHECK(out.weight == 5.0);
  CHECK(out.grads == std::vector<double>{11.0, 22.0});
  CHECK(acc.count() == 0);
  CHECK_THROWS_AS(acc.flush(), config_error);
}

TEST_CASE("accumulator: K=1 flush is identity on its single input") {
  Accumulator acc(1, 3);
  acc.accumulate(7.5, 2.5, {1.0, -2.0, 3.0});
  CHECK(acc.ready());
  auto out = acc.flush();
  CHECK(out.loss_sum == 7.5);
  CHECK(out.weight == 2.5);
  CHECK(out.grads == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("accumulator: construction and shape validation") {
  CHECK_THROWS_AS(Accumulator(0, 3), config_error);
  Accumulator acc(2, 3);
  CHECK_THROWS_AS(acc.accumulate(1.0, 1.0, {1.0}), shape_error);
}
