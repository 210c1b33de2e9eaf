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

#include "cmcd/losses.h"

#include <cmath>
#include <random>

#include "cmcd/error.h"

namespace cmcd {

std::string_view to_string(MatchKind kind) {
  switch (kind) {
    case MatchKind::kFull: return "full";
    case MatchKind::kNon: return "non";
    case MatchKind::kPartialFront: return "partial_front";
    case MatchKind::kPartialBack: return "partial_back";
  }
  return "non";
}

MatchKind match_kind_from_string(std::string_view s) {
  if (s == "full") return MatchKind::kFull;
  if (s == "non") return MatchKind::kNon;
  if (s == "partial_front") return MatchKind::kPartialFront;
  if (s == "partial_back") return MatchKind::kPartialBack;
  throw ValueError("unknown match type '" + std::string(s) + "'");
}

std::string_view to_string(DetectionPhase phase) {
  return phase == DetectionPhase::kBce ? "bce" : "focal";
}

void LossWeights::validate() const {
  if (!(lambda1 >= 0) || !(lambda2 >= 0)) throw ValueError("loss weights must be >= 0");
  if (!(switch_fraction >= 0 && switch_fraction <= 1))
    throw ValueError("switch_fraction must lie in [0, 1]");
  if (!(focal_gamma >= 0) || !(focal_alpha > 0)) throw ValueError("focal gamma >= 0 and alpha > 0 required");
  if (!(g > 0)) throw ValueError("target width g must be positive");
}

DetectionPhase detection_phase(double step_fraction, const LossWeights& w) {
  return step_fraction < w.switch_fraction ? DetectionPhase::kBce : DetectionPhase::kFocal;
}

double denoising_loss(const Tensor& clean, const Tensor& noisy) {
  if (clean.shape() != noisy.shape())
    throw ShapeError("denoising_loss: shape mismatch " + shape_str(clean.shape()) + " vs " +
                     shape_str(noisy.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double d = clean[i] - noisy[i];
    acc += d * d;
  }
  return acc / static_cast<double>(clean.size());
}

namespace {

void require_dims(std::size_t t_t, std::size_t t_a) {
  if (t_t < 1 || t_a < 1) throw ValueError("target dimensions must be >= 1");
}

void normalize_rows(Tensor& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double total = 0.0;
    for (double v : m.row(r)) total += v;
    if (total > 0) {
      for (double& v : m.row(r)) v /= total;
    } else {
      for (double& v : m.row(r)) v = 1.0 / static_cast<double>(m.cols());
    }
  }
}

}  // namespace

Tensor target_full(std::size_t t_t, std::size_t t_a, double g) {
  require_dims(t_t, t_a);
  if (!(g > 0)) throw ValueError("target_full: g must be positive");
  Tensor m({t_t, t_a});
  for (std::size_t i = 0; i < t_t; ++i) {
    for (std::size_t j = 0; j < t_a; ++j) {
      const double d = static_cast<double>(j + 1) / t_a - static_cast<double>(i + 1) / t_t;
      m(i, j) = std::exp(-d * d / (2.0 * g * g));
    }
  }
  normalize_rows(m);
  return m;
}

Tensor target_non(std::size_t t_t, std::size_t t_a, std::uint64_t seed) {
  require_dims(t_t, t_a);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Tensor m({t_t, t_a});
  for (double& v : m.data()) v = std::abs(noise(rng));
  normalize_rows(m);
  return m;
}

Tensor target_partial(std::size_t t_t, std::size_t t_a, std::size_t boundary_k, double g,
                      std::uint64_t seed) {
  require_dims(t_t, t_a);
  if (boundary_k > t_t)
    throw ValueError("target_partial: boundary " + std::to_string(boundary_k) + " outside [0, " +
                     std::to_string(t_t) + "]");
  const Tensor full = target_full(t_t, t_a, g);
  Tensor m = target_non(t_t, t_a, seed);
  for (std::size_t i = 0; i < boundary_k; ++i)
    for (std::size_t j = 0; j < t_a; ++j) m(i, j) = full(i, j);
  return m;
}

Tensor matching_target(std::size_t t_t, std::size_t t_a, const MatchType& mt, double g,
                       std::uint64_t seed) {
  switch (mt.kind) {
    case MatchKind::kFull: return target_full(t_t, t_a, g);
    case MatchKind::kPartialFront: return target_partial(t_t, t_a, mt.boundary_k, g, seed);
    case MatchKind::kNon:
    case MatchKind::kPartialBack: return target_non(t_t, t_a, seed);
  }
  return target_non(t_t, t_a, seed);
}

double mml_loss(const Tensor& affinity, const MatchType& mt, std::uint64_t seed, double g) {
  if (affinity.rank() != 2) throw ShapeError("mml_loss: affinity must be a matrix");
  const Tensor target = matching_target(affinity.rows(), affinity.cols(), mt, g, seed);
  return denoising_loss(affinity, target);
}

double bce_loss(double p, int label) { return focal_loss(p, label, 0.0, 1.0); }

double focal_loss(double p, int label, double gamma, double alpha) {
  if (!(p > 0 && p < 1)) throw ValueError("detection loss needs 0 < p < 1");
  if (label != 0 && label != 1) throw ValueError("label must be 0 or 1");
  const double pt = label == 1 ? p : 1.0 - p;
  const double modulator = gamma == 0.0 ? 1.0 : std::pow(1.0 - pt, gamma);
  return -alpha * modulator * std::log(pt);
}

double detection_loss(double p, int label, double step_fraction, const LossWeights& w) {
  return detection_phase(step_fraction, w) == DetectionPhase::kBce
             ? bce_loss(p, label)
             : focal_loss(p, label, w.focal_gamma, w.focal_alpha);
}

double total_loss(double l_dn, double l_mm, double l_d, const LossWeights& w) {
  if (l_dn < 0 || l_mm < 0 || l_d < 0) throw ValueError("loss components must be >= 0");
  return w.lambda1 * l_dn + w.lambda2 * l_mm + l_d;
}

Var detection_loss(Var logit, int label, DetectionPhase phase, const LossWeights& w) {
  if (logit.value().size() != 1) throw ShapeError("detection_loss: logit must be scalar");
  if (label != 0 && label != 1) throw ValueError("label must be 0 or 1");
  const double gamma = phase == DetectionPhase::kBce ? 0.0 : w.focal_gamma;
  const double alpha = phase == DetectionPhase::kBce ? 1.0 : w.focal_alpha;
  const double sign = label == 1 ? 1.0 : -1.0;
  // p_t = sigmoid(s) with s = +/- logit; ln p_t = -softplus(-s).
  const double s = sign * logit.value().item();
  const double log_pt = -(std::max(-s, 0.0) + std::log1p(std::exp(-std::abs(s))));
  const double pt = std::exp(log_pt);
  const double q = s >= 0 ? std::exp(-s) / (1.0 + std::exp(-s)) : 1.0 / (1.0 + std::exp(s));  // 1 - p_t
  const double modulator = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
  const double loss = -alpha * modulator * log_pt;
  // dL/ds = alpha gamma q^gamma p_t ln p_t - alpha q^(gamma+1)
  const double dlds = alpha * gamma * modulator * pt * log_pt - alpha * modulator * q;
  const double dlogit = sign * dlds;
  const Var inputs[] = {logit};
  return logit.tape()->record(Tensor::scalar(loss), inputs, [dlogit](Tape& t, std::size_t self) {
    if (Tensor* g = t.grad_buffer(t.inputs(self)[0])) (*g)[0] += dlogit * t.output_grad(self)[0];
  });
}

Var total_loss(Var l_dn, Var l_mm, Var l_d, const LossWeights& w) {
  return add(add(scale(l_dn, w.lambda1), scale(l_mm, w.lambda2)), l_d);
}

}  // namespace cmcd
