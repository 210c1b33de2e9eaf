// Copyright 2026 The CMCD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <random>

#include "cmcd/error.h"
#include "cmcd/losses.h"
#include "doctest.h"
#include "test_util.h"

using namespace cmcd;
using cmcd::testing::random_tensor;

namespace {

void check_row_stochastic(const Tensor& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0;
    for (double v : m.row(r)) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("denoising loss") {
  const Tensor a = Tensor::matrix({{1, 0}});
  const Tensor z = Tensor::matrix({{0, 0}});
  CHECK(denoising_loss(a, a) == 0.0);
  CHECK(denoising_loss(a, z) == 0.5);
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({3, 4}, rng), y = random_tensor({3, 4}, rng);
  CHECK(denoising_loss(x, y) == denoising_loss(y, x));
  CHECK_THROWS_AS(denoising_loss(x, Tensor({4, 3})), ShapeError);
}

TEST_CASE("full-match target closed form") {
  const Tensor m = target_full(2, 2, 0.2);
  const double off = std::exp(-3.125);
  CHECK(m(0, 0) == doctest::Approx(1.0 / (1.0 + off)).epsilon(1e-12));
  CHECK(std::abs(m(0, 0) - 0.9579) <= 1e-4);
  CHECK(std::abs(m(0, 1) - 0.0421) <= 1e-4);
  CHECK(m(1, 0) == doctest::Approx(m(0, 1)).epsilon(1e-15));
  CHECK(m(1, 1) == doctest::Approx(m(0, 0)).epsilon(1e-15));
}

TEST_CASE("square full-match target: symmetric kernel, diagonal maxima") {
  // Row normalization rescales each row, so only the 2x2 case is symmetric
  // outright. In general the kernel is symmetric up to row scaling, which
  // is equivalent to the cycle condition m_ij m_jk m_ki = m_ji m_kj m_ik.
  const Tensor two = target_full(2, 2);
  CHECK(two(0, 1) == doctest::Approx(two(1, 0)).epsilon(1e-15));
  for (std::size_t n = 1; n <= 12; ++n) {
    const Tensor m = target_full(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(m(i, i) >= m(i, j));
        for (std::size_t k = 0; k < n; ++k) {
          const double fwd = m(i, j) * m(j, k) * m(k, i), rev = m(j, i) * m(k, j) * m(i, k);
          CHECK(fwd == doctest::Approx(rev).epsilon(1e-9));
        }
      }
    }
  }
}

TEST_CASE("targets are row-stochastic on the full 12x12 grid") {
  for (std::size_t tt = 1; tt <= 12; ++tt) {
    for (std::size_t ta = 1; ta <= 12; ++ta) {
      check_row_stochastic(target_full(tt, ta));
      check_row_stochastic(target_non(tt, ta, tt * 100 + ta));
      for (std::size_t k = 0; k <= tt; ++k) check_row_stochastic(target_partial(tt, ta, k, 0.2, 5));
      CHECK(target_partial(tt, ta, tt, 0.2, 9) == target_full(tt, ta, 0.2));
      CHECK(target_partial(tt, ta, 0, 0.2, 9) == target_non(tt, ta, 9));
    }
  }
}

TEST_CASE("non-match target is seeded") {
  CHECK(target_non(4, 6, 1) == target_non(4, 6, 1));
  CHECK_FALSE(target_non(4, 6, 1) == target_non(4, 6, 2));
  CHECK_THROWS_AS(target_non(0, 3, 1), ValueError);
}

TEST_CASE("partial target is piecewise") {
  const Tensor m = target_partial(2, 5, 1, 0.2, 42);
  const Tensor f = target_full(2, 5, 0.2), n = target_non(2, 5, 42);
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(m(0, j) == f(0, j));
    CHECK(m(1, j) == n(1, j));
  }
  CHECK_THROWS_AS(target_partial(2, 5, 3, 0.2, 1), ValueError);
}

TEST_CASE("matching loss") {
  const MatchType full{MatchKind::kFull, 3};
  CHECK(mml_loss(target_full(3, 5), full, 1) == 0.0);

  const MatchType back{MatchKind::kPartialBack, 0};
  CHECK(matching_target(3, 5, back, 0.2, 4) == target_non(3, 5, 4));
  CHECK(mml_loss(target_non(3, 5, 4), back, 4) == 0.0);
  const MatchType front{MatchKind::kPartialFront, 2};
  CHECK(matching_target(3, 5, front, 0.2, 4) == target_partial(3, 5, 2, 0.2, 4));

  const Tensor a = Tensor::matrix({{0.5, 0.5}, {0.2, 0.8}});
  const Tensor t = target_full(2, 2);
  double oracle = 0;
  for (std::size_t i = 0; i < 4; ++i) oracle += (a[i] - t[i]) * (a[i] - t[i]);
  CHECK(mml_loss(a, {MatchKind::kFull, 2}, 0) == doctest::Approx(oracle / 4).epsilon(1e-14));
}

TEST_CASE("detection losses") {
  CHECK(bce_loss(1 - 1e-12, 1) < 1e-11);
  CHECK(focal_loss(0.5, 1, 2.0, 0.25) == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-14));
  CHECK(std::abs(focal_loss(0.5, 1, 2.0, 0.25) - 0.04332) <= 1e-5);
  CHECK_THROWS_AS(bce_loss(0.0, 1), ValueError);
  CHECK_THROWS_AS(bce_loss(0.5, 2), ValueError);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
  for (int i = 0; i < 100; ++i) {
    const double p = u(rng);
    const int y = static_cast<int>(rng() & 1);
    CHECK(std::abs(focal_loss(p, y, 0.0, 1.0) - bce_loss(p, y)) <= 1e-12);
    LossWeights w;
    w.focal_gamma = 0.0;
    w.focal_alpha = 1.0;
    CHECK(std::abs(detection_loss(p, y, 0.9, w) - bce_loss(p, y)) <= 1e-12);
  }
}

TEST_CASE("focal loss decreases with confidence in the true class") {
  double prev = focal_loss(0.05, 1, 2.0, 0.25);
  for (int k = 2; k <= 19; ++k) {
    const double cur = focal_loss(0.05 * k, 1, 2.0, 0.25);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("detection phase switch") {
  LossWeights w;
  CHECK(detection_phase(0.0, w) == DetectionPhase::kBce);
  CHECK(detection_phase(0.49, w) == DetectionPhase::kBce);
  CHECK(detection_phase(0.5, w) == DetectionPhase::kFocal);
  CHECK(detection_loss(0.3, 1, 0.1, w) == bce_loss(0.3, 1));
  CHECK(detection_loss(0.3, 1, 0.7, w) == focal_loss(0.3, 1, 2.0, 0.25));
}

TEST_CASE("total loss") {
  const LossWeights w;
  CHECK(total_loss(1, 1, 1, w) == 1.8);
  CHECK(total_loss(0, 0, 0, w) == 0.0);
  CHECK(total_loss(2, 0, 0, w) == 1.0);
  CHECK_THROWS_AS(total_loss(-1, 0, 0, w), ValueError);
  LossWeights bad;
  bad.lambda1 = -0.1;
  CHECK_THROWS_AS(bad.validate(), ValueError);
}

TEST_CASE("match kind names") {
  for (MatchKind k : {MatchKind::kFull, MatchKind::kNon, MatchKind::kPartialFront, MatchKind::kPartialBack})
    CHECK(match_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(match_kind_from_string("sideways"), ValueError);
}

TEST_CASE("taped detection loss matches the scalar form and its gradient") {
  LossWeights w;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> logit(-4, 4);
  for (int i = 0; i < 20; ++i) {
    const double z = logit(rng);
    for (int y : {0, 1}) {
      for (DetectionPhase phase : {DetectionPhase::kBce, DetectionPhase::kFocal}) {
        Tape tape;
        const Var l = detection_loss(tape.constant(Tensor::scalar(z)), y, phase, w);
        const double expected = phase == DetectionPhase::kBce
                                    ? bce_loss(sigmoid(z), y)
                                    : focal_loss(sigmoid(z), y, w.focal_gamma, w.focal_alpha);
        CHECK(l.value().item() == doctest::Approx(expected).epsilon(1e-12));
        const ScalarFunction f = [&](Tape&, std::span<const Var> v) {
          return detection_loss(v[0], y, phase, w);
        };
        CHECK(finite_diff_check(f, {Tensor::scalar(z)}) <= 1e-4);
      }
    }
  }
  // Saturated logits stay finite.
  Tape tape;
  CHECK(std::isfinite(detection_loss(tape.constant(Tensor::scalar(800.0)), 0, DetectionPhase::kBce, w).value().item()));
}

TEST_CASE("taped total loss and matching term are differentiable") {
  std::mt19937_64 rng(6);
  const Tensor target = target_partial(3, 4, 2, 0.2, 8);
  const LossWeights w;
  const ScalarFunction f = [&](Tape& t, std::span<const Var> v) {
    const Var a = softmax_rows(v[0]);
    const Var l_mm = mse(a, t.constant(target));
    const Var l_dn = mse(v[1], v[2]);
    const Var l_d = detection_loss(sum(v[1]), 1, DetectionPhase::kFocal, w);
    return total_loss(l_dn, l_mm, l_d, w);
  };
  CHECK(finite_diff_check(f, {random_tensor({3, 4}, rng, -2, 2), random_tensor({2, 2}, rng),
                              random_tensor({2, 2}, rng)}) <= 1e-4);
}
