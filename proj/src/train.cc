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

#include "cmcd/train.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

#include "cmcd/error.h"
#include "cmcd/seed.h"
#include "json.hpp"

namespace cmcd {

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index writes
// only its own slot, so results do not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

AdamState adam_init(const ModelParams& params) {
  return {ModelParams::zeros(params.dims), ModelParams::zeros(params.dims), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamOptions& opt) {
  if (!(params.dims == grads.dims) || !(state.m.dims == params.dims))
    throw ShapeError("adam_step: gradient layout does not match parameters");
  ++state.t;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  auto p = params.named();
  const auto g = grads.named();
  auto m = state.m.named();
  auto v = state.v.named();
  for (std::size_t i = 0; i < p.size(); ++i) {
    Tensor& pt = *p[i].second;
    const Tensor& gt = *g[i].second;
    if (pt.shape() != gt.shape())
      throw ShapeError("adam_step: gradient shape mismatch for " + std::string(p[i].first));
    Tensor& mt = *m[i].second;
    Tensor& vt = *v[i].second;
    for (std::size_t k = 0; k < pt.size(); ++k) {
      mt[k] = opt.beta1 * mt[k] + (1.0 - opt.beta1) * gt[k];
      vt[k] = opt.beta2 * vt[k] + (1.0 - opt.beta2) * gt[k] * gt[k];
      const double mhat = mt[k] / bc1;
      const double vhat = vt[k] / bc2;
      pt[k] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (steps < 1) throw ValueError("steps must be >= 1");
  if (batch_size < 1) throw ValueError("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ValueError("learning_rate must be > 0");
  if (!(snr_min <= snr_max)) throw ValueError("snr_min must not exceed snr_max");
  if (!(positive_fraction >= 0 && positive_fraction <= 1))
    throw ValueError("positive_fraction must lie in [0, 1]");
  if (threads < 1) throw ValueError("threads must be >= 1");
  weights.validate();
}

std::size_t focal_switch_step(const TrainConfig& cfg) {
  return static_cast<std::size_t>(std::floor(cfg.weights.switch_fraction * static_cast<double>(cfg.steps)));
}

ObjectiveVars build_objective(Tape& tape, const ParamVars& p, const Tensor& clean_features,
                              const Tensor* noisy_features, const PhonemeSequence& text,
                              const MatchType& match, int label, DetectionPhase phase,
                              const LossWeights& w, std::uint64_t target_seed) {
  ObjectiveVars o;
  o.clean = forward_graph(tape, p, clean_features, text);
  const Tensor& a = o.clean.affinity.value();
  o.l_mm = mse(o.clean.affinity,
               tape.constant(matching_target(a.rows(), a.cols(), match, w.g, target_seed)));
  o.l_d = detection_loss(o.clean.logit, label, phase, w);
  if (noisy_features) {
    const Var noisy = encode_audio(tape.constant(*noisy_features), p);
    o.l_dn = mse(o.clean.audio_embedding, noisy);
  } else {
    o.l_dn = tape.constant(Tensor::scalar(0.0));
  }
  o.total = total_loss(o.l_dn, o.l_mm, o.l_d, w);
  return o;
}

namespace {

struct NoiseDraw {
  std::size_t index = 0;
  std::size_t offset = 0;
  double snr_db = 0;
};

struct Job {
  std::size_t pair = 0;
  std::optional<NoiseDraw> noise;
  std::uint64_t target_seed = 0;
};

struct JobResult {
  ModelParams grads;
  double l_dn = 0, l_mm = 0, l_d = 0, total = 0;
};

JobResult run_job(const ModelParams& params, const TrainingData& data, const Job& job,
                  DetectionPhase phase, const LossWeights& w) {
  const LabeledPair& pair = data.pairs[job.pair];
  std::optional<Tensor> noisy;
  if (job.noise) {
    const Waveform mixed =
        mix_at_snr(pair.audio, data.noise[job.noise->index], job.noise->snr_db, job.noise->offset);
    noisy = log_mel(mixed);
  }
  Tape tape;
  const ParamVars pv = ParamVars::bind(tape, params);
  const ObjectiveVars o =
      build_objective(tape, pv, pair.features, noisy ? &*noisy : nullptr, pair.record.phonemes,
                      pair.record.match, pair.record.label, phase, w, job.target_seed);
  tape.backward(o.total);
  JobResult r;
  r.grads = pv.gradients(params.dims);
  r.l_dn = o.l_dn.value().item();
  r.l_mm = o.l_mm.value().item();
  r.l_d = o.l_d.value().item();
  r.total = o.total.value().item();
  return r;
}

}  // namespace

TrainResult train(const TrainingData& data, const TrainConfig& cfg, const ModelParams& init,
                  const StepCallback& on_eval) {
  cfg.validate();
  if (data.pairs.empty()) throw ValueError("train: empty corpus");
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < data.pairs.size(); ++i)
    (data.pairs[i].record.label == 1 ? positives : negatives).push_back(i);
  const bool use_noise = cfg.weights.lambda1 > 0 && !data.noise.empty();
  for (const Waveform& n : data.noise)
    if (n.samples.empty()) throw ValueError("train: empty noise recording");

  TrainResult result;
  result.params = init;
  AdamState adam = adam_init(init);
  const AdamOptions opt{cfg.learning_rate};
  std::mt19937_64 rng(derive_seed(cfg.seed, 100));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t switch_step = focal_switch_step(cfg);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const DetectionPhase phase = step < switch_step ? DetectionPhase::kBce : DetectionPhase::kFocal;
    std::vector<Job> jobs(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const bool want_pos = unit(rng) < cfg.positive_fraction;
      const auto& pool = (want_pos && !positives.empty()) || negatives.empty() ? positives : negatives;
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      Job& job = jobs[b];
      job.pair = pool[pick(rng)];
      job.target_seed = derive_seed(cfg.seed, step, job.pair);
      if (use_noise && !data.pairs[job.pair].audio.samples.empty()) {
        NoiseDraw nd;
        nd.index = std::uniform_int_distribution<std::size_t>(0, data.noise.size() - 1)(rng);
        nd.offset = std::uniform_int_distribution<std::size_t>(0, data.noise[nd.index].samples.size() - 1)(rng);
        nd.snr_db = cfg.snr_min + (cfg.snr_max - cfg.snr_min) * unit(rng);
        job.noise = nd;
      }
    }

    std::vector<JobResult> results(jobs.size());
    parallel_for(jobs.size(), cfg.threads, [&](std::size_t b) {
      results[b] = run_job(result.params, data, jobs[b], phase, cfg.weights);
    });

    ModelParams grads = std::move(results[0].grads);
    auto acc = grads.named();
    StepLog log{step, 0, 0, 0, 0, phase};
    for (std::size_t b = 0; b < results.size(); ++b) {
      if (b > 0) {
        const auto g = results[b].grads.named();
        for (std::size_t i = 0; i < acc.size(); ++i)
          for (std::size_t k = 0; k < acc[i].second->size(); ++k) (*acc[i].second)[k] += (*g[i].second)[k];
      }
      log.l_dn += results[b].l_dn;
      log.l_mm += results[b].l_mm;
      log.l_d += results[b].l_d;
      log.total += results[b].total;
    }
    const double inv = 1.0 / static_cast<double>(results.size());
    for (auto& [name, t] : acc)
      for (double& v : t->data()) v *= inv;
    log.l_dn *= inv;
    log.l_mm *= inv;
    log.l_d *= inv;
    log.total *= inv;
    result.log.push_back(log);

    adam_step(result.params, grads, adam, opt);
    if (on_eval && cfg.eval_interval && (step + 1) % cfg.eval_interval == 0) on_eval(step + 1, result.params);
  }
  return result;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<StepLog>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,l_dn,l_mm,l_d,total,phase\n";
  char buf[256];
  for (const StepLog& s : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,", s.step, s.l_dn, s.l_mm, s.l_d, s.total);
    out << buf << to_string(s.phase) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<EvalPair> materialize_episodes(const std::vector<Episode>& episodes,
                                           const AudioSource& audio) {
  std::vector<EvalPair> out;
  for (const Episode& ep : episodes) {
    for (const auto* group : {&ep.positives, &ep.negatives})
      for (const PairRecord& r : *group) out.push_back({materialize(r, audio), ep.difficulty});
  }
  return out;
}

std::vector<ScoredPair> score_pairs(const ModelParams& params, const std::vector<EvalPair>& pairs,
                                    std::size_t threads) {
  std::vector<ScoredPair> out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const LabeledPair& p = pairs[i].pair;
    const ForwardOutput f = forward(p.features, p.record.phonemes, params);
    ScoredPair& s = out[i];
    s.score = f.logit;
    s.prob = sigmoid_value(f.logit);
    s.label = p.record.label;
    s.n_words = p.record.n_words;
    s.difficulty = pairs[i].difficulty;
    s.kind = p.record.match.kind;
    s.band_mass = diagonal_band_mass(f.affinity);
  });
  return out;
}

namespace {

std::optional<MetricSummary> summary_of(const std::vector<ScoredPair>& scored,
                                        const std::function<bool(const ScoredPair&)>& keep) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const ScoredPair& s : scored) {
    if (!keep(s)) continue;
    scores.push_back(s.score);
    labels.push_back(s.label);
  }
  MetricSummary m;
  m.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  m.negatives = labels.size() - m.positives;
  if (!m.positives || !m.negatives) return std::nullopt;
  m.eer = compute_eer(scores, labels);
  m.auc = compute_auc(scores, labels);
  return m;
}

}  // namespace

EvalReport summarize(const std::vector<ScoredPair>& scored) {
  EvalReport r;
  std::vector<double> scores;
  std::vector<int> labels;
  double band = 0.0;
  for (const ScoredPair& s : scored) {
    scores.push_back(s.score);
    labels.push_back(s.label);
    r.match_counts[std::string(to_string(s.kind))]++;
    if (s.label == 1) band += s.band_mass;
  }
  r.eer = compute_eer(scores, labels);
  r.auc = compute_auc(scores, labels);
  r.det = det_curve(scores, labels);
  r.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  r.negatives = labels.size() - r.positives;
  r.positive_band_mass = band / static_cast<double>(r.positives);
  for (std::size_t n = 1; n <= 4; ++n)
    if (auto m = summary_of(scored, [n](const ScoredPair& s) { return s.n_words == n; }))
      r.per_length[n] = *m;
  for (const Difficulty d : {Difficulty::kEasy, Difficulty::kHard})
    if (auto m = summary_of(scored, [d](const ScoredPair& s) { return s.difficulty == d; }))
      r.per_difficulty[std::string(to_string(d))] = *m;
  return r;
}

EvalReport evaluate(const ModelParams& params, const std::vector<EvalPair>& pairs,
                    std::size_t threads) {
  return summarize(score_pairs(params, pairs, threads));
}

void write_report_json(const std::filesystem::path& path, const EvalReport& r) {
  using json = nlohmann::ordered_json;
  auto summary = [](const MetricSummary& m) {
    return json{{"eer", m.eer}, {"auc", m.auc}, {"positives", m.positives}, {"negatives", m.negatives}};
  };
  json j;
  j["eer"] = r.eer;
  j["auc"] = r.auc;
  j["positives"] = r.positives;
  j["negatives"] = r.negatives;
  j["positive_band_mass"] = r.positive_band_mass;
  j["per_length"] = json::object();
  for (const auto& [n, m] : r.per_length) j["per_length"][std::to_string(n)] = summary(m);
  j["per_difficulty"] = json::object();
  for (const auto& [d, m] : r.per_difficulty) j["per_difficulty"][d] = summary(m);
  j["match_counts"] = json::object();
  for (const auto& [k, n] : r.match_counts) j["match_counts"][k] = n;
  j["det_points"] = r.det.size();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_det_csv(const std::filesystem::path& path, const std::vector<DetPoint>& det) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "threshold,far,miss\n";
  char buf[128];
  for (const DetPoint& p : det) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.threshold, p.far, p.miss);
    out << buf;
  }
}

}  // namespace cmcd
