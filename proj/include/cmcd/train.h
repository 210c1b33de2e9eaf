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

#ifndef CMCD_TRAIN_H_
#define CMCD_TRAIN_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cmcd/autodiff.h"
#include "cmcd/corpus.h"
#include "cmcd/losses.h"
#include "cmcd/metrics.h"
#include "cmcd/model.h"

namespace cmcd {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ModelParams m, v;
  std::size_t t = 0;
};

AdamState adam_init(const ModelParams& params);

// Bias-corrected Adam update in place. Throws ShapeError if grads do not
// match params.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamOptions& opt = {});

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  std::uint64_t seed = 7;
  LossWeights weights;
  double snr_min = 5.0;
  double snr_max = 15.0;
  std::size_t eval_interval = 0;  // 0 disables the callback
  std::size_t threads = 1;
  double positive_fraction = 0.5;  // batch slots drawn from positives

  void validate() const;
};

// Loss graph for one pair. `noisy_features` may be null, in which case the
// de-noising term is zero and the noisy branch is skipped.
struct ObjectiveVars {
  ForwardVars clean;
  Var l_dn, l_mm, l_d, total;
};
ObjectiveVars build_objective(Tape& tape, const ParamVars& p, const Tensor& clean_features,
                              const Tensor* noisy_features, const PhonemeSequence& text,
                              const MatchType& match, int label, DetectionPhase phase,
                              const LossWeights& w, std::uint64_t target_seed);

struct StepLog {
  std::size_t step = 0;
  double l_dn = 0, l_mm = 0, l_d = 0, total = 0;  // batch means, unweighted components
  DetectionPhase phase = DetectionPhase::kBce;
};

struct TrainingData {
  std::vector<LabeledPair> pairs;
  std::vector<Waveform> noise;  // babble pool for the Siamese branch
};

struct TrainResult {
  ModelParams params;
  std::vector<StepLog> log;
};

// First step index trained with focal loss: floor(switch_fraction * steps).
std::size_t focal_switch_step(const TrainConfig& cfg);

using StepCallback = std::function<void(std::size_t step, const ModelParams& params)>;

TrainResult train(const TrainingData& data, const TrainConfig& cfg, const ModelParams& init,
                  const StepCallback& on_eval = {});

void write_metrics_csv(const std::filesystem::path& path, const std::vector<StepLog>& log);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalPair {
  LabeledPair pair;
  Difficulty difficulty = Difficulty::kEasy;
};

std::vector<EvalPair> materialize_episodes(const std::vector<Episode>& episodes,
                                           const AudioSource& audio);

struct ScoredPair {
  double score = 0;  // discriminator logit
  double prob = 0;
  int label = 0;
  std::size_t n_words = 0;
  Difficulty difficulty = Difficulty::kEasy;
  MatchKind kind = MatchKind::kNon;
  double band_mass = 0;
};

std::vector<ScoredPair> score_pairs(const ModelParams& params, const std::vector<EvalPair>& pairs,
                                    std::size_t threads = 1);

struct MetricSummary {
  double eer = 0, auc = 0;
  std::size_t positives = 0, negatives = 0;
};

struct EvalReport {
  double eer = 0;
  double auc = 0;
  std::size_t positives = 0, negatives = 0;
  std::vector<DetPoint> det;
  std::map<std::size_t, MetricSummary> per_length;  // by word count
  std::map<std::string, MetricSummary> per_difficulty;
  std::map<std::string, std::size_t> match_counts;
  double positive_band_mass = 0;  // mean diagonal band mass of positive pairs
};

EvalReport summarize(const std::vector<ScoredPair>& scored);
EvalReport evaluate(const ModelParams& params, const std::vector<EvalPair>& pairs,
                    std::size_t threads = 1);

void write_report_json(const std::filesystem::path& path, const EvalReport& report);
void write_det_csv(const std::filesystem::path& path, const std::vector<DetPoint>& det);

}  // namespace cmcd

#endif  // CMCD_TRAIN_H_
