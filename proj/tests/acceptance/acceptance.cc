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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cmcd/autodiff.h"
#include "cmcd/corpus.h"
#include "cmcd/dsp.h"
#include "cmcd/losses.h"
#include "cmcd/manifest.h"
#include "cmcd/metrics.h"
#include "cmcd/model.h"
#include "cmcd/seed.h"
#include "cmcd/text.h"
#include "cmcd/train.h"

namespace fs = std::filesystem;
using namespace cmcd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects failed sub-checks for one criterion.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++count_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    failed_ |= !ok;
  }
  bool ok() const { return !failed_; }
  std::string failures() const {
    std::string s;
    for (const auto& f : failures_) s += (s.empty() ? "" : "; ") + f;
    return s;
  }
  std::size_t count() const { return count_; }

 private:
  bool failed_ = false;
  std::size_t count_ = 0;
  std::vector<std::string> failures_;
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

Var weighted_sum(Tape& tape, Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(out, tape.constant(random_tensor(out.shape(), rng))));
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  const double tol = 1e-4;
  double worst = 0.0;
  Checks c;
  auto check = [&](const std::string& name, const ScalarFunction& f, const std::vector<Tensor>& params) {
    const double err = finite_diff_check(f, params);
    worst = std::max(worst, err);
    c.expect(err <= tol, name + " error " + fmt("%.2e", err));
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dim(1, 6);
    const std::size_t p = dim(rng), q = dim(rng), r = dim(rng);
    const Tensor a = random_tensor({p, q}, rng), a2 = random_tensor({p, q}, rng);
    const Tensor b = random_tensor({q, r}, rng), bt = random_tensor({r, q}, rng);
    const Tensor bias = random_tensor({q}, rng);
    auto unary = [seed](Var (*op)(Var)) {
      return [op, seed](Tape& t, std::span<const Var> v) { return weighted_sum(t, op(v[0]), seed); };
    };
    auto binary = [seed](Var (*op)(Var, Var)) {
      return [op, seed](Tape& t, std::span<const Var> v) { return weighted_sum(t, op(v[0], v[1]), seed); };
    };
    check("matmul", binary(&matmul), {a, b});
    check("matmul_bt", binary(&matmul_bt), {a, bt});
    check("add", binary(&add), {a, a2});
    check("sub", binary(&sub), {a, a2});
    check("mul", binary(&mul), {a, a2});
    check("add_row_bias", binary(&add_row_bias), {a, bias});
    check("scale", [seed](Tape& t, std::span<const Var> v) { return weighted_sum(t, scale(v[0], -1.7), seed); }, {a});
    check("relu", unary(&relu), {a});
    check("sigmoid", unary(&sigmoid), {a});
    check("tanh", unary(&tanh), {a});
    check("softmax_rows", unary(&softmax_rows), {random_tensor({p, q}, rng, -3, 3)});
    check("last_row", unary(&last_row), {a});
    check("sum", [](Tape&, std::span<const Var> v) { return sum(v[0]); }, {a});
    check("mse", [](Tape&, std::span<const Var> v) { return mse(v[0], v[1]); }, {a, a2});
    const std::size_t t_len = dim(rng), c_in = dim(rng), c_out = dim(rng), h = dim(rng);
    const std::size_t k = 2 * (seed % 3) + 1;
    for (std::size_t stride : {1u, 2u}) {
      check("conv1d",
            [stride, seed](Tape& t, std::span<const Var> v) { return weighted_sum(t, conv1d(v[0], v[1], stride), seed); },
            {random_tensor({t_len, c_in}, rng), random_tensor({c_out, c_in, k}, rng)});
    }
    check("gru",
          [seed](Tape& t, std::span<const Var> v) { return weighted_sum(t, gru(v[0], v[1], v[2], v[3], v[4]), seed); },
          {random_tensor({t_len, c_in}, rng), random_tensor({c_in, 3 * h}, rng), random_tensor({h, 3 * h}, rng),
           random_tensor({3 * h}, rng, -0.5, 0.5), random_tensor({h}, rng, -0.5, 0.5)});
  }

  // Whole network plus the weighted objective: T = 8 frames, 3 phonemes, m = 8.
  ModelDims dims;
  dims.conv_channels = 8;
  dims.embed = 8;
  const ModelParams params = init_params(11, dims);
  std::mt19937_64 rng(21);
  const Tensor clean = random_tensor({8, kNumMelBins}, rng), noisy = random_tensor({8, kNumMelBins}, rng);
  const PhonemeSequence seq = parse_phonemes("AY M IY");
  std::vector<Tensor> flat;
  for (const auto& [name, t] : params.named()) flat.push_back(*t);
  for (const MatchType mt : {MatchType{MatchKind::kFull, 3}, MatchType{MatchKind::kNon, 0},
                             MatchType{MatchKind::kPartialFront, 2}}) {
    for (const DetectionPhase phase : {DetectionPhase::kBce, DetectionPhase::kFocal}) {
      const int label = mt.kind == MatchKind::kFull ? 1 : 0;
      const ScalarFunction f = [&](Tape& tape, std::span<const Var> v) {
        ParamVars pv = ParamVars::bind(tape, ModelParams::zeros(dims), false);
        Var* slots[] = {&pv.conv1_w, &pv.conv1_b, &pv.conv2_w, &pv.conv2_b, &pv.gru1_wx, &pv.gru1_wh,
                        &pv.gru1_b,  &pv.gru2_wx, &pv.gru2_wh, &pv.gru2_b,  &pv.text_w,  &pv.text_b,
                        &pv.disc_wx, &pv.disc_wh, &pv.disc_b,  &pv.out_w,   &pv.out_b};
        for (std::size_t i = 0; i < v.size(); ++i) *slots[i] = v[i];
        return build_objective(tape, pv, clean, &noisy, seq, mt, label, phase, LossWeights{}, 99).total;
      };
      check(std::string("objective/") + std::string(to_string(mt.kind)), f, flat);
    }
  }
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 120.0, "runtime " + fmt("%.1f", elapsed) + " s");
  return {c.ok(), std::to_string(c.count()) + " checks, max error " + fmt("%.2e", worst) + ", " +
                      fmt("%.1f", elapsed) + " s" + (c.ok() ? "" : "; " + c.failures())};
}

Outcome target_suite() {
  Checks c;
  auto row_stochastic = [&](const Tensor& m, const std::string& what) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < m.cols(); ++j) {
        c.expect(m(i, j) >= 0, what + " negative entry");
        s += m(i, j);
      }
      c.expect(std::abs(s - 1.0) <= 1e-12, what + " row sum " + fmt("%.15f", s));
    }
  };
  for (std::size_t tt = 1; tt <= 12; ++tt) {
    for (std::size_t ta = 1; ta <= 12; ++ta) {
      const std::string at = " at " + std::to_string(tt) + "x" + std::to_string(ta);
      const std::uint64_t seed = tt * 131 + ta;
      row_stochastic(target_full(tt, ta), "M_f" + at);
      row_stochastic(target_non(tt, ta, seed), "M_n" + at);
      for (std::size_t k = 0; k <= tt; ++k) row_stochastic(target_partial(tt, ta, k, 0.2, seed), "M_pf" + at);
      c.expect(target_partial(tt, ta, 0, 0.2, seed) == target_non(tt, ta, seed), "M_pf(K=0) != M_n" + at);
      c.expect(target_partial(tt, ta, tt, 0.2, seed) == target_full(tt, ta, 0.2), "M_pf(K=T_t) != M_f" + at);
    }
  }
  // Positions 1 and 2 of 2 with g = 0.2: off-diagonal weight exp(-(1/2)^2 / (2 g^2)).
  const double off = std::exp(-0.25 / (2 * 0.2 * 0.2));
  const double diag = 1.0 / (1.0 + off), other = off / (1.0 + off);
  const Tensor two = target_full(2, 2, 0.2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      c.expect(std::abs(two(i, j) - (i == j ? diag : other)) <= 1e-6, "2x2 closed form");
  return {c.ok(), std::to_string(c.count()) + " checks; 2x2 diagonal " + fmt("%.6f", two(0, 0)) +
                      (c.ok() ? "" : "; " + c.failures())};
}

Outcome loss_arithmetic() {
  Checks c;
  const LossWeights w;
  c.expect(total_loss(1, 1, 1, w) == 1.8, "total_loss(1,1,1) = " + fmt("%.17g", total_loss(1, 1, 1, w)));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> p(1e-6, 1 - 1e-6);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const double pi = p(rng);
    const int y = i % 2;
    worst = std::max(worst, std::abs(focal_loss(pi, y, 0.0, 1.0) - bce_loss(pi, y)));
  }
  c.expect(worst <= 1e-12, "focal(gamma=0, alpha=1) vs BCE " + fmt("%.2e", worst));
  const double f = focal_loss(0.5, 1, 2.0, 0.25);
  c.expect(std::abs(f - 0.04332) <= 1e-5, "focal(0.5) = " + fmt("%.6f", f));
  return {c.ok(), "total 1.8, focal/BCE max gap " + fmt("%.1e", worst) + ", focal(0.5) " + fmt("%.6f", f) +
                      (c.ok() ? "" : "; " + c.failures())};
}

// Configuration of the desk-scale run. Dimensions are reduced from the
// default m = 128 so that one run fits the single-core time budget.
constexpr std::size_t kToySteps = 5000;
constexpr std::size_t kToyBatch = 8;
constexpr std::size_t kToyWidth = 32;
constexpr std::uint64_t kToySeed = 7;

struct ToyRun {
  EvalReport report;
  double seconds = 0;
  double loss_head = 0, loss_tail = 0;  // mean total loss over the first / last 10% of steps
  double matched_accepted = 0;          // share of positive eval pairs with probability > 0.5
};

ToyRun toy_run(const TrainingData& data, const std::vector<EvalPair>& eval, const LossWeights& w) {
  TrainConfig cfg;
  cfg.steps = kToySteps;
  cfg.batch_size = kToyBatch;
  cfg.seed = kToySeed;
  cfg.weights = w;
  ModelDims dims;
  dims.conv_channels = kToyWidth;
  dims.embed = kToyWidth;
  const auto t0 = Clock::now();
  const TrainResult r = train(data, cfg, init_params(derive_seed(kToySeed, 1), dims));
  ToyRun out;
  out.seconds = seconds_since(t0);
  out.report = evaluate(r.params, eval);
  const std::size_t tenth = std::max<std::size_t>(1, r.log.size() / 10);
  for (std::size_t i = 0; i < tenth; ++i) {
    out.loss_head += r.log[i].total / tenth;
    out.loss_tail += r.log[r.log.size() - 1 - i].total / tenth;
  }
  std::size_t positives = 0, accepted = 0;
  for (const ScoredPair& s : score_pairs(r.params, eval)) {
    if (s.label != 1) continue;
    ++positives;
    accepted += s.prob > 0.5;
  }
  out.matched_accepted = positives ? static_cast<double>(accepted) / positives : 0.0;
  return out;
}

Outcome desk_scale_learning() {
  Checks c;
  const ToyCorpus corpus = synth_toy_corpus(8, 10, kToySeed);
  const MemoryAudio audio(&corpus.audio);
  TrainingData data;
  data.pairs = materialize(corpus.train, audio);
  for (const std::string& id : corpus.noise) data.noise.push_back(corpus.audio.at(id));
  const std::vector<EvalPair> eval = materialize_episodes(corpus.eval, audio);
  std::set<MatchKind> kinds;
  for (const EvalPair& p : eval) kinds.insert(p.pair.record.match.kind);
  c.expect(kinds.size() == 4, "eval set lacks a match case");

  const ToyRun full = toy_run(data, eval, LossWeights{});
  LossWeights detection_only;
  detection_only.lambda1 = 0.0;
  detection_only.lambda2 = 0.0;
  const ToyRun ablation = toy_run(data, eval, detection_only);

  c.expect(full.report.eer <= 0.05, "EER " + fmt("%.4f", full.report.eer) + " > 0.05");
  c.expect(full.seconds < 600.0, "runtime " + fmt("%.0f", full.seconds) + " s");
  c.expect(full.report.positive_band_mass > ablation.report.positive_band_mass,
           "band mass with matching loss " + fmt("%.4f", full.report.positive_band_mass) +
               " not above detection-only " + fmt("%.4f", ablation.report.positive_band_mass));
  return {c.ok(), "EER " + fmt("%.4f", full.report.eer) + " AUC " + fmt("%.4f", full.report.auc) + " in " +
                      fmt("%.0f", full.seconds) + " s (loss " + fmt("%.4f", full.loss_head) + " -> " +
                      fmt("%.4f", full.loss_tail) + ", matched prob > 0.5 on " + fmt("%.3f", full.matched_accepted) +
                      "); band mass " + fmt("%.4f", full.report.positive_band_mass) +
                      " vs detection-only " + fmt("%.4f", ablation.report.positive_band_mass) + " (EER " +
                      fmt("%.4f", ablation.report.eer) + ")" + (c.ok() ? "" : "; " + c.failures())};
}

// Slow threshold sweep: accept when score >= threshold.
std::vector<DetPoint> brute_det(const std::vector<double>& s, const std::vector<int>& y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  const double np = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double nn = static_cast<double>(y.size()) - np;
  std::vector<DetPoint> out{{INFINITY, 0.0, 1.0}};
  for (double t : thresholds) {
    std::size_t fa = 0, miss = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      fa += y[i] == 0 && s[i] >= t;
      miss += y[i] == 1 && s[i] < t;
    }
    out.push_back({t, fa / nn, miss / np});
  }
  return out;
}

double brute_eer(const std::vector<double>& s, const std::vector<int>& y) {
  const auto c = brute_det(s, y);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double d = c[i].far - c[i].miss;
    if (d == 0) return c[i].far;
    if (i == 0 || d < 0) continue;
    const double dp = c[i - 1].far - c[i - 1].miss;
    if (dp < 0) return c[i - 1].far + (-dp / (d - dp)) * (c[i].far - c[i - 1].far);
  }
  return NAN;
}

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

Outcome metric_oracles() {
  Checks c;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> n_dist(2, 20), grid(0, 6), coin(0, 1);
  std::size_t with_ties = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s;
    std::vector<int> y;
    const int n = n_dist(rng);
    for (int i = 0; i < n; ++i) {
      s.push_back(grid(rng) / 4.0);
      y.push_back(coin(rng));
    }
    y[0] = 1;
    y[1] = 0;
    std::shuffle(y.begin(), y.end(), rng);
    with_ties += std::set<double>(s.begin(), s.end()).size() < s.size();
    const std::string at = "instance " + std::to_string(trial);
    const auto det = det_curve(s, y), ref = brute_det(s, y);
    bool same = det.size() == ref.size();
    for (std::size_t i = 0; same && i < det.size(); ++i)
      same = det[i].threshold == ref[i].threshold && det[i].far == ref[i].far && det[i].miss == ref[i].miss;
    c.expect(same, "DET " + at);
    c.expect(compute_eer(s, y) == brute_eer(s, y), "EER " + at);
    c.expect(compute_auc(s, y) == brute_auc(s, y), "AUC " + at);
  }
  return {c.ok(), "100 instances (" + std::to_string(with_ties) + " with ties) exact" +
                      (c.ok() ? "" : "; " + c.failures())};
}

Outcome data_pipeline() {
  Checks c;
  const Lexicon lex = load_dictionary(fs::path(CMCD_TEST_DATA_DIR) / "mini.dict");
  auto phrase = [&](const std::string& text) {
    Phrase p;
    p.text = text;
    p.n_words = normalize_words(text).size();
    p.phonemes = g2p(text, lex);
    return p;
  };
  const NegativeClass frind = classify_negative(phrase("friend"), phrase("frind"));
  const NegativeClass guard = classify_negative(phrase("friend"), phrase("guard"));
  c.expect(frind == NegativeClass::kHard, "frind is " + std::string(to_string(frind)));
  c.expect(guard == NegativeClass::kEasy, "guard is " + std::string(to_string(guard)));
  const PhonemeSequence anchor = g2p("i mean to", lex);
  const std::vector<std::pair<std::string, MatchKind>> quartet = {{"i mean to", MatchKind::kFull},
                                                                  {"be a banner", MatchKind::kNon},
                                                                  {"i mean you", MatchKind::kPartialFront},
                                                                  {"we mean to", MatchKind::kPartialBack}};
  std::string kinds;
  for (const auto& [text, want] : quartet) {
    const MatchKind got = determine_match_type(anchor, g2p(text, lex)).kind;
    c.expect(got == want, "\"" + text + "\" is " + std::string(to_string(got)));
    kinds += (kinds.empty() ? "" : "/") + std::string(to_string(got));
  }
  return {c.ok(), "frind " + std::string(to_string(frind)) + ", guard " + std::string(to_string(guard)) +
                      "; quartet " + kinds + (c.ok() ? "" : "; " + c.failures())};
}

Outcome dsp() {
  Checks c;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> snr(-10.0, 30.0), amp(0.01, 1.0);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Waveform clean, noise;
    const double a = amp(rng), b = amp(rng);
    for (int i = 0; i < 4000; ++i) clean.samples.push_back(a * n01(rng));
    for (int i = 0; i < 1500; ++i) noise.samples.push_back(b * n01(rng));
    const double target = snr(rng);
    const std::size_t offset = static_cast<std::size_t>(trial * 29) % noise.samples.size();
    const Waveform mixed = mix_at_snr(clean, noise, target, offset);
    std::vector<double> added(mixed.samples.size());
    for (std::size_t i = 0; i < added.size(); ++i) added[i] = mixed.samples[i] - clean.samples[i];
    const double measured = 10 * std::log10(mean_power(clean.samples) / mean_power(added));
    worst = std::max(worst, std::abs(measured - target));
  }
  c.expect(worst <= 1e-6, "SNR error " + fmt("%.2e", worst) + " dB");
  Waveform second;
  second.samples.resize(16000);
  for (std::size_t i = 0; i < second.samples.size(); ++i) second.samples[i] = 0.1 * n01(rng);
  const Tensor feats = log_mel(second);
  c.expect(feats.shape() == Shape{98, 40}, "log-mel shape");
  const Tensor emb = encode_audio(feats, init_params(1));
  c.expect(emb.shape() == Shape{49, 128}, "encoder shape");
  return {c.ok(), "SNR max error " + fmt("%.1e", worst) + " dB, features " + std::to_string(feats.rows()) + "x" +
                      std::to_string(feats.cols()) + ", embedding " + std::to_string(emb.rows()) + "x" +
                      std::to_string(emb.cols()) + (c.ok() ? "" : "; " + c.failures())};
}

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return files;
}

// Runs every subcommand from a clean directory with the installed binary.
void cli_pipeline(const fs::path& dir, Checks& c) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string bin = std::string("\"") + CMCD_BINARY + "\"";
  {
    std::ofstream(dir / "synth.json") << R"({"synth_keywords": 3, "synth_samples": 3})";
    std::vector<AlignedUtterance> us;
    const std::vector<std::vector<std::string>> texts = {
        {"i", "mean", "to"}, {"we", "mean", "to"}, {"i", "mean", "you"}, {"i", "mean", "to"},
        {"the", "river"},    {"the", "giver"},     {"the", "river"},     {"i", "mean", "to"},
        {"the", "river"},    {"the", "town"},      {"be", "a", "banner"}};
    for (std::size_t k = 0; k < texts.size(); ++k) {
      AlignedUtterance u{"u" + std::to_string(k) + ".wav", {}};
      double t = 0.05;
      for (const auto& w : texts[k]) {
        u.words.push_back({w, t, t + 0.25});
        t += 0.3;
      }
      us.push_back(u);
    }
    write_alignments(dir / "align.jsonl", us);
    std::ofstream(dir / "build.json") << R"({"alignments": "align.jsonl", "dictionary": ")"
                                      << (fs::path(CMCD_TEST_DATA_DIR) / "mini.dict").string()
                                      << R"(", "out_dir": "built"})";
  }
  const std::string corpus = (dir / "corpus").string();
  c.expect(shell(bin + " synth-corpus --config " + (dir / "synth.json").string() + " --out " + corpus) == 0,
           "synth-corpus failed");
  c.expect(shell(bin + " build-corpus --config " + (dir / "build.json").string()) == 0, "build-corpus failed");
  // Shrink the generated training config.
  {
    std::ifstream in(dir / "corpus" / "config.json");
    std::string cfg{std::istreambuf_iterator<char>(in), {}};
    cfg.insert(cfg.rfind('}'), R"(, "steps": 30, "batch_size": 4, "embed_dim": 16, "conv_channels": 16)");
    std::ofstream(dir / "corpus" / "train.json") << cfg;
  }
  const std::string cfg = " --config " + (dir / "corpus" / "train.json").string();
  c.expect(shell(bin + " train" + cfg + " --threads 2") == 0, "train failed");
  c.expect(shell(bin + " eval" + cfg) == 0, "eval failed");
  const auto pairs = read_pairs(dir / "corpus" / "train_pairs.jsonl");
  c.expect(shell(bin + " inspect-affinity" + cfg + " --checkpoint " + (dir / "corpus" / "run" / "checkpoint.bin").string() +
                 " --audio " + (dir / "corpus" / pairs.front().segment.audio).string() + " --text \"" +
                 pairs.front().text + "\"") == 0,
           "inspect-affinity failed");
}

Outcome cli_determinism() {
  Checks c;
  const fs::path root = fs::path(CMCD_TEST_SCRATCH_DIR) / "acceptance_cli";
  cli_pipeline(root / "a", c);
  cli_pipeline(root / "b", c);
  const auto a = snapshot(root / "a"), b = snapshot(root / "b");
  c.expect(a.size() == b.size(), "file sets differ");
  std::size_t identical = 0;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    const bool same = it != b.end() && it->second == bytes;
    identical += same;
    c.expect(same, name + " differs");
  }
  for (const char* f : {"built/pairs.jsonl", "corpus/run/checkpoint.bin", "corpus/run/report.json",
                        "corpus/run/affinity.pgm"})
    c.expect(a.count(f) == 1, std::string(f) + " missing");
  return {c.ok(), std::to_string(identical) + "/" + std::to_string(a.size()) + " files byte-identical" +
                      (c.ok() ? "" : "; " + c.failures())};
}

}  // namespace

// Optional arguments select criteria by number; default is all of them.
int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"target patterns", target_suite},
      {"loss arithmetic", loss_arithmetic},
      {"desk-scale learning", desk_scale_learning},
      {"metric oracles", metric_oracles},
      {"data pipeline", data_pipeline},
      {"dsp", dsp},
      {"cli determinism", cli_determinism},
  };
  std::set<std::size_t> selected;
  for (int a = 1; a < argc; ++a) selected.insert(std::strtoul(argv[a], nullptr, 10));
  int failed = 0;
  std::size_t ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    ++ran;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, ran);
  return failed ? 1 : 0;
}
