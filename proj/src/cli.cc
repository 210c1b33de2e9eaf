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

#include "cmcd/cli.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include "cmcd/corpus.h"
#include "cmcd/error.h"
#include "cmcd/manifest.h"
#include "cmcd/metrics.h"
#include "cmcd/model.h"
#include "cmcd/seed.h"
#include "cmcd/train.h"
#include "json.hpp"

namespace cmcd {

namespace fs = std::filesystem;

namespace {

// Derived seed streams. Everything random in a run is a function of --seed.
constexpr std::uint64_t kInitStream = 1;

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Flat JSON config. Relative paths resolve against the config file's
// directory; without a config file they resolve against the working
// directory.
struct Config {
  fs::path base = ".";
  std::uint64_t seed = 7;
  std::size_t threads = 1;
  std::optional<fs::path> dictionary, corpus_root, out_dir, alignments;
  std::optional<fs::path> train_manifest, eval_manifest, noise_list;
  std::size_t hard_threshold = kDefaultHardThreshold;
  std::size_t episode_positives = 3;
  std::size_t episode_negatives = 3;
  std::size_t synth_keywords = 8;
  std::size_t synth_samples = 10;
  TrainConfig train;
  ModelDims dims;
};

using json = nlohmann::json;

std::uint64_t as_uint(const json& v, const std::string& key) {
  if (!v.is_number_unsigned()) throw ConfigError("config key '" + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

Config load_config(const std::optional<fs::path>& path) {
  Config c;
  if (!path) return c;
  std::ifstream in(*path);
  if (!in) throw IoError("config not found: " + path->string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("invalid config " + path->string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  c.base = path->parent_path().empty() ? fs::path(".") : path->parent_path();

  auto path_key = [&c](std::optional<fs::path>& slot) {
    return [&c, &slot](const json& v, const std::string& key) {
      if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
      slot = c.base / v.get<std::string>();
    };
  };
  auto size_key = [](std::size_t& slot) {
    return [&slot](const json& v, const std::string& key) { slot = as_uint(v, key); };
  };
  auto real_key = [](double& slot) {
    return [&slot](const json& v, const std::string& key) { slot = as_double(v, key); };
  };
  LossWeights& w = c.train.weights;
  const std::map<std::string, std::function<void(const json&, const std::string&)>> keys = {
      {"seed", [&c](const json& v, const std::string& k) { c.seed = as_uint(v, k); }},
      {"threads", size_key(c.threads)},
      {"dictionary", path_key(c.dictionary)},
      {"corpus_root", path_key(c.corpus_root)},
      {"out_dir", path_key(c.out_dir)},
      {"alignments", path_key(c.alignments)},
      {"train_manifest", path_key(c.train_manifest)},
      {"eval_manifest", path_key(c.eval_manifest)},
      {"noise_list", path_key(c.noise_list)},
      {"hard_threshold", size_key(c.hard_threshold)},
      {"episode_positives", size_key(c.episode_positives)},
      {"episode_negatives", size_key(c.episode_negatives)},
      {"synth_keywords", size_key(c.synth_keywords)},
      {"synth_samples", size_key(c.synth_samples)},
      {"steps", size_key(c.train.steps)},
      {"batch_size", size_key(c.train.batch_size)},
      {"learning_rate", real_key(c.train.learning_rate)},
      {"eval_interval", size_key(c.train.eval_interval)},
      {"positive_fraction", real_key(c.train.positive_fraction)},
      {"snr_min", real_key(c.train.snr_min)},
      {"snr_max", real_key(c.train.snr_max)},
      {"lambda1", real_key(w.lambda1)},
      {"lambda2", real_key(w.lambda2)},
      {"focal_gamma", real_key(w.focal_gamma)},
      {"focal_alpha", real_key(w.focal_alpha)},
      {"switch_fraction", real_key(w.switch_fraction)},
      {"g", real_key(w.g)},
      {"embed_dim", size_key(c.dims.embed)},
      {"conv_channels", size_key(c.dims.conv_channels)},
  };
  for (const auto& [key, value] : j.items()) {
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError("unknown config key: " + key);
    it->second(value, key);
  }
  return c;
}

const fs::path& require(const std::optional<fs::path>& slot, const char* key, const char* cmd) {
  if (!slot) throw ConfigError(std::string("config key '") + key + "' is required for " + cmd);
  return *slot;
}

// Flags shared by every subcommand.
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file (default: $" + std::string(kConfigEnvVar) + ")");
  cmd->add_option("--seed", f.seed, "Master seed; overrides the config");
  cmd->add_option("--threads", f.threads, "Worker threads (default 1)")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output directory; overrides out_dir");
}

Config resolve(const CommonFlags& f) {
  std::optional<fs::path> path;
  if (!f.config.empty()) {
    path = f.config;
  } else if (const char* env = std::getenv(kConfigEnvVar); env && *env) {
    path = env;
  }
  Config c = load_config(path);
  if (f.seed) c.seed = *f.seed;
  if (f.threads) c.threads = *f.threads;
  if (!f.out.empty()) c.out_dir = fs::path(f.out);
  c.train.seed = c.seed;
  c.train.threads = c.threads;
  return c;
}

fs::path output_dir(const Config& c) {
  const fs::path dir = c.out_dir ? *c.out_dir : fs::path(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());
  return dir;
}

Lexicon config_lexicon(const Config& c) {
  return c.dictionary ? load_dictionary(*c.dictionary) : Lexicon{};
}

fs::path corpus_root(const Config& c) { return c.corpus_root ? *c.corpus_root : c.base; }

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_synth(const Config& c, std::ostream& out) {
  const fs::path dir = output_dir(c);
  const ToyCorpus corpus = synth_toy_corpus(c.synth_keywords, c.synth_samples, c.seed);
  for (const auto& [id, wave] : corpus.audio) {
    const fs::path p = dir / id;
    fs::create_directories(p.parent_path());
    write_wav(p, wave);
  }
  write_dictionary(dir / "lexicon.dict", corpus.lexicon);
  write_path_list(dir / "noise.txt", corpus.noise);
  write_pairs(dir / "train_pairs.jsonl", corpus.train);
  write_episodes(dir / "eval_episodes.jsonl", corpus.eval);
  nlohmann::ordered_json cfg;
  cfg["seed"] = c.seed;
  cfg["dictionary"] = "lexicon.dict";
  cfg["corpus_root"] = ".";
  cfg["out_dir"] = "run";
  cfg["train_manifest"] = "train_pairs.jsonl";
  cfg["eval_manifest"] = "eval_episodes.jsonl";
  cfg["noise_list"] = "noise.txt";
  std::ofstream(dir / "config.json") << cfg.dump(2) << '\n';
  out << "synth-corpus: " << corpus.keywords.size() << " keywords, " << corpus.audio.size()
      << " recordings, " << corpus.train.size() << " train pairs, " << corpus.eval.size()
      << " eval episodes -> " << dir.string() << '\n';
  return kExitOk;
}

int cmd_build(const Config& c, std::ostream& out) {
  const auto utterances = read_alignments(require(c.alignments, "alignments", "build-corpus"));
  const Lexicon lex = config_lexicon(c);
  std::vector<Phrase> phrases;
  for (const AlignedUtterance& u : utterances) {
    for (std::size_t n = 1; n <= 4; ++n) {
      std::vector<Phrase> p = split_phrases(u, n);
      phrases.insert(phrases.end(), p.begin(), p.end());
    }
  }
  attach_phonemes(phrases, lex);
  const EpisodeSet set =
      build_episodes(phrases, c.episode_positives, c.episode_negatives, c.seed, c.hard_threshold);
  const std::vector<PairRecord> pairs = flatten(set.episodes);
  const fs::path dir = output_dir(c);
  write_phrases(dir / "phrases.jsonl", phrases);
  write_episodes(dir / "episodes.jsonl", set.episodes);
  write_pairs(dir / "pairs.jsonl", pairs);
  out << "build-corpus: " << utterances.size() << " utterances, " << phrases.size() << " phrases, "
      << set.episodes.size() << " episodes (" << set.skipped_anchors << " anchors skipped), "
      << pairs.size() << " pairs -> " << dir.string() << '\n';
  return kExitOk;
}

std::vector<EvalPair> load_eval_pairs(const Config& c, const Lexicon& lex, const char* cmd) {
  const auto episodes = read_episodes(require(c.eval_manifest, "eval_manifest", cmd), &lex);
  return materialize_episodes(episodes, DirectoryAudio(corpus_root(c)));
}

int cmd_train(const Config& c, const std::string& checkpoint_flag, std::ostream& out) {
  c.train.validate();
  const Lexicon lex = config_lexicon(c);
  const DirectoryAudio audio(corpus_root(c));
  TrainingData data;
  data.pairs = materialize(read_pairs(require(c.train_manifest, "train_manifest", "train"), &lex), audio);
  if (c.noise_list) {
    for (const std::string& id : read_path_list(*c.noise_list)) data.noise.push_back(audio.load({id}));
  }
  std::vector<EvalPair> eval_pairs;
  if (c.train.eval_interval && c.eval_manifest) eval_pairs = load_eval_pairs(c, lex, "train");
  const StepCallback on_eval = [&](std::size_t step, const ModelParams& p) {
    if (eval_pairs.empty()) return;
    const EvalReport r = evaluate(p, eval_pairs, c.threads);
    out << "step " << step << ": eer " << fmt("%.4f", r.eer) << " auc " << fmt("%.4f", r.auc) << '\n';
  };
  const fs::path dir = output_dir(c);
  const fs::path checkpoint = checkpoint_flag.empty() ? dir / "checkpoint.bin" : fs::path(checkpoint_flag);
  const TrainResult result =
      train(data, c.train, init_params(derive_seed(c.seed, kInitStream), c.dims), on_eval);
  save_checkpoint(checkpoint, result.params);
  write_metrics_csv(dir / "metrics.csv", result.log);
  out << "train: " << result.log.size() << " steps on " << data.pairs.size() << " pairs, final total "
      << fmt("%.6f", result.log.back().total) << " -> " << checkpoint.string() << '\n';
  return kExitOk;
}

int cmd_eval(const Config& c, const std::string& checkpoint_flag, std::ostream& out) {
  const fs::path checkpoint = !checkpoint_flag.empty() ? fs::path(checkpoint_flag)
                              : c.out_dir              ? *c.out_dir / "checkpoint.bin"
                                                       : fs::path("checkpoint.bin");
  const ModelParams params = load_checkpoint(checkpoint);
  const Lexicon lex = config_lexicon(c);
  const auto pairs = load_eval_pairs(c, lex, "eval");
  const EvalReport r = evaluate(params, pairs, c.threads);
  const fs::path dir = output_dir(c);
  write_report_json(dir / "report.json", r);
  write_det_csv(dir / "det.csv", r.det);
  out << "eval: eer " << fmt("%.4f", r.eer) << " auc " << fmt("%.4f", r.auc) << " over " << r.positives
      << " positives / " << r.negatives << " negatives -> " << (dir / "report.json").string() << '\n';
  return kExitOk;
}

int cmd_inspect(const Config& c, const std::string& checkpoint, const std::string& audio_path,
                const std::string& text, std::ostream& out) {
  const ModelParams params = load_checkpoint(checkpoint);
  const Lexicon lex = config_lexicon(c);
  const PhonemeSequence seq = g2p(text, lex);
  const Tensor features = log_mel(read_wav(audio_path));
  const ForwardOutput f = forward(features, seq, params);
  const fs::path dir = output_dir(c);
  const AffinityFiles files = export_affinity(f.affinity, dir / "affinity");
  out << "inspect-affinity: probability " << fmt("%.6f", f.prob) << " for \"" << text << "\" ("
      << f.affinity.rows() << " phonemes x " << f.affinity.cols() << " frames) -> "
      << files.csv.string() << ", " << files.pgm.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-modal keyword detector: corpus building, training and evaluation", "cmcd"};
  app.require_subcommand(1);

  CommonFlags synth_f, build_f, train_f, eval_f, inspect_f;
  std::string train_ckpt, eval_ckpt, inspect_ckpt, inspect_audio, inspect_text;

  CLI::App* synth = app.add_subcommand("synth-corpus", "Generate the synthetic tone corpus");
  add_common(synth, synth_f);
  CLI::App* build = app.add_subcommand("build-corpus", "Build phrase, episode and pair manifests");
  add_common(build, build_f);
  CLI::App* trn = app.add_subcommand("train", "Train a model from a pair manifest");
  add_common(trn, train_f);
  trn->add_option("--checkpoint", train_ckpt, "Checkpoint to write (default <out>/checkpoint.bin)");
  CLI::App* ev = app.add_subcommand("eval", "Score an episode manifest");
  add_common(ev, eval_f);
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint to load (default <out>/checkpoint.bin)");
  CLI::App* insp = app.add_subcommand("inspect-affinity", "Export the affinity matrix for one pair");
  add_common(insp, inspect_f);
  insp->add_option("--checkpoint", inspect_ckpt, "Checkpoint to load")->required();
  insp->add_option("--audio", inspect_audio, "16-bit PCM WAV file")->required();
  insp->add_option("--text", inspect_text, "Enrolled keyword text")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    // Show the help of the subcommand that failed to parse, if any.
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(resolve(synth_f), out);
    if (build->parsed()) return cmd_build(resolve(build_f), out);
    if (trn->parsed()) return cmd_train(resolve(train_f), train_ckpt, out);
    if (ev->parsed()) return cmd_eval(resolve(eval_f), eval_ckpt, out);
    if (insp->parsed())
      return cmd_inspect(resolve(inspect_f), inspect_ckpt, inspect_audio, inspect_text, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace cmcd
