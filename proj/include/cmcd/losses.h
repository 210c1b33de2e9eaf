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

#ifndef CMCD_LOSSES_H_
#define CMCD_LOSSES_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "cmcd/autodiff.h"
#include "cmcd/tensor.h"

namespace cmcd {

enum class MatchKind { kFull, kNon, kPartialFront, kPartialBack };

std::string_view to_string(MatchKind kind);
MatchKind match_kind_from_string(std::string_view s);

struct MatchType {
  MatchKind kind = MatchKind::kNon;
  // Number of leading text phonemes that match (PartialFront), or T_t for a
  // full match. Unused for the other kinds.
  std::size_t boundary_k = 0;

  bool positive() const { return kind == MatchKind::kFull; }
  bool operator==(const MatchType&) const = default;
};

struct LossWeights {
  double lambda1 = 0.5;  // de-noising
  double lambda2 = 0.3;  // monotonic matching
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double switch_fraction = 0.5;  // BCE before, focal from here on
  double g = 0.2;                // width of the diagonal target

  void validate() const;
};

enum class DetectionPhase { kBce, kFocal };
std::string_view to_string(DetectionPhase phase);
DetectionPhase detection_phase(double step_fraction, const LossWeights& w);

// Mean squared error between clean and noisy audio embeddings.
double denoising_loss(const Tensor& clean, const Tensor& noisy);

// Gaussian diagonal: exp(-(j/T_a - i/T_t)^2 / (2 g^2)) with 1-based i, j,
// each row normalized to sum 1.
Tensor target_full(std::size_t t_t, std::size_t t_a, double g = 0.2);
// |N(0, 1)| entries, each row normalized to sum 1; deterministic per seed.
Tensor target_non(std::size_t t_t, std::size_t t_a, std::uint64_t seed);
// Rows 1..K from target_full, rows K+1..T_t from target_non.
Tensor target_partial(std::size_t t_t, std::size_t t_a, std::size_t boundary_k, double g,
                      std::uint64_t seed);
// Target chosen by match type; PartialBack uses the non-matching pattern.
Tensor matching_target(std::size_t t_t, std::size_t t_a, const MatchType& mt, double g,
                       std::uint64_t seed);

double mml_loss(const Tensor& affinity, const MatchType& mt, std::uint64_t seed, double g = 0.2);

// BCE, or focal -alpha (1 - p_t)^gamma ln(p_t) once the step fraction
// reaches switch_fraction. Throws ValueError unless 0 < p < 1.
double detection_loss(double p, int label, double step_fraction, const LossWeights& w);
double focal_loss(double p, int label, double gamma, double alpha);
double bce_loss(double p, int label);

// lambda1 * l_dn + lambda2 * l_mm + l_d. Throws ValueError on a negative
// component.
double total_loss(double l_dn, double l_mm, double l_d, const LossWeights& w = {});

// Taped variants. The detection loss takes the discriminator logit and uses
// log-sigmoid internally, so it stays finite for saturated probabilities.
Var detection_loss(Var logit, int label, DetectionPhase phase, const LossWeights& w);
Var total_loss(Var l_dn, Var l_mm, Var l_d, const LossWeights& w);

}  // namespace cmcd

#endif  // CMCD_LOSSES_H_
