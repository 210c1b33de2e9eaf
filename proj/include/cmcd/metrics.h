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

#ifndef CMCD_METRICS_H_
#define CMCD_METRICS_H_

#include <filesystem>
#include <span>
#include <vector>

#include "cmcd/tensor.h"

namespace cmcd {

// Operating point for "accept if score >= threshold". The first point uses
// threshold +inf (accept nothing).
struct DetPoint {
  double threshold = 0.0;
  double far = 0.0;   // false-alarm rate over negatives
  double miss = 0.0;  // false-reject rate over positives
};

// One point per unique score plus the +inf start, in decreasing threshold
// order: far rises from 0 to 1 while miss falls from 1 to 0. Throws
// ValueError unless both classes are present.
std::vector<DetPoint> det_curve(std::span<const double> scores, std::span<const int> labels);

// Where far == miss along the curve above, linearly interpolated between the
// two bracketing points.
double compute_eer(std::span<const double> scores, std::span<const int> labels);

// P(random positive outscores random negative), ties counted 1/2.
double compute_auc(std::span<const double> scores, std::span<const int> labels);

struct AffinityFiles {
  std::filesystem::path csv;
  std::filesystem::path pgm;
};

// Writes <base>.csv (T_t rows of T_a values, full precision) and <base>.pgm
// (binary 8-bit grayscale of the transpose: T_a rows, T_t columns, min -> 0,
// max -> 255, constant matrix -> 128).
AffinityFiles export_affinity(const Tensor& affinity, const std::filesystem::path& base);

Tensor read_affinity_csv(const std::filesystem::path& path);

// Mean over text rows of the affinity mass with |j/T_a - i/T_t| <= half_width
// (1-based positions), i.e. the band of half-width half_width * T_a frames
// around the diagonal of the full-match target.
double diagonal_band_mass(const Tensor& affinity, double half_width = 0.1);

}  // namespace cmcd

#endif  // CMCD_METRICS_H_
