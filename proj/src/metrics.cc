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

#include "cmcd/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "cmcd/error.h"

namespace cmcd {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValueError("scores and labels differ in length");
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) ++pos;
    else if (labels[i] == 0) ++neg;
    else throw ValueError("labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw ValueError("scores must be finite");
  }
  if (pos == 0 || neg == 0) throw ValueError("both positive and negative examples are required");
}

}  // namespace

std::vector<DetPoint> det_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;

  std::vector<DetPoint> curve;
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  std::size_t accepted_pos = 0, accepted_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    while (i < order.size() && scores[order[i]] == thr) {
      (labels[order[i]] == 1 ? accepted_pos : accepted_neg)++;
      ++i;
    }
    curve.push_back({thr, accepted_neg / n_neg, (n_pos - accepted_pos) / n_pos});
  }
  return curve;
}

double compute_eer(std::span<const double> scores, std::span<const int> labels) {
  const auto curve = det_curve(scores, labels);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double d = curve[i].far - curve[i].miss;
    if (d < 0) continue;
    if (d == 0 || i == 0) return curve[i].far;
    const DetPoint& a = curve[i - 1];
    const DetPoint& b = curve[i];
    const double da = a.far - a.miss;
    const double t = -da / (d - da);
    return a.far + t * (b.far - a.far);
  }
  return 1.0;  // unreachable: the last point has far = 1, miss = 0
}

double compute_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  // Mann-Whitney U with mid-ranks for ties.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;  // sum of positive ranks, doubled to stay integral
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_mid_rank = static_cast<double>(i + 1 + j);  // 2 * average of i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += twice_mid_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(scores.size() - n_pos);
  const double np = static_cast<double>(n_pos);
  // U = R - n_pos (n_pos + 1) / 2, kept doubled until the final division.
  const double twice_u = rank_sum - np * (np + 1.0);
  return (twice_u / 2.0) / (np * n_neg);
}

AffinityFiles export_affinity(const Tensor& affinity, const std::filesystem::path& base) {
  if (affinity.empty() || affinity.rank() != 2) throw ValueError("export_affinity: empty matrix");
  AffinityFiles files{base, base};
  files.csv += ".csv";
  files.pgm += ".pgm";

  std::ofstream csv(files.csv);
  if (!csv) throw IoError("cannot write " + files.csv.string());
  char buf[40];
  for (std::size_t r = 0; r < affinity.rows(); ++r) {
    for (std::size_t c = 0; c < affinity.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", affinity(r, c));
      csv << (c ? "," : "") << buf;
    }
    csv << '\n';
  }
  if (!csv) throw IoError("failed writing " + files.csv.string());

  const auto [lo_it, hi_it] = std::minmax_element(affinity.data().begin(), affinity.data().end());
  const double lo = *lo_it, hi = *hi_it;
  const std::size_t width = affinity.rows(), height = affinity.cols();
  std::ofstream pgm(files.pgm, std::ios::binary);
  if (!pgm) throw IoError("cannot write " + files.pgm.string());
  pgm << "P5\n" << width << ' ' << height << "\n255\n";
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double v = affinity(x, y);
      const long px = hi > lo ? std::lround(255.0 * (v - lo) / (hi - lo)) : 128;
      pgm.put(static_cast<char>(static_cast<unsigned char>(std::clamp(px, 0L, 255L))));
    }
  }
  if (!pgm) throw IoError("failed writing " + files.pgm.string());
  return files;
}

Tensor read_affinity_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::stod(cell));
      ++n;
    }
    if (rows && n != cols) throw ParseError("ragged affinity CSV", rows + 1);
    cols = n;
    ++rows;
  }
  if (!rows) throw ParseError("empty affinity CSV");
  return Tensor({rows, cols}, std::move(values));
}

double diagonal_band_mass(const Tensor& affinity, double half_width) {
  if (affinity.empty() || affinity.rank() != 2) throw ValueError("diagonal_band_mass: empty matrix");
  const double t_t = static_cast<double>(affinity.rows());
  const double t_a = static_cast<double>(affinity.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < affinity.rows(); ++i) {
    for (std::size_t j = 0; j < affinity.cols(); ++j) {
      if (std::abs((j + 1) / t_a - (i + 1) / t_t) <= half_width + 1e-12) total += affinity(i, j);
    }
  }
  return total / t_t;
}

}  // namespace cmcd
