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

#ifndef CMCD_CORPUS_H_
#define CMCD_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cmcd/dsp.h"
#include "cmcd/losses.h"
#include "cmcd/tensor.h"
#include "cmcd/text.h"

namespace cmcd {

struct WordSpan {
  std::string text;
  double start = 0.0;
  double end = 0.0;
};

// One utterance with word-level time stamps from a forced aligner.
struct AlignedUtterance {
  std::string audio;
  std::vector<WordSpan> words;

  // Throws ValueError unless 0 <= start < end and spans are sorted and
  // disjoint.
  void validate() const;
};

// Audio region inside a file; end < 0 means "to the end of the file".
struct SegmentRef {
  std::string audio;
  double start = 0.0;
  double end = -1.0;

  bool operator==(const SegmentRef&) const = default;
};

struct Phrase {
  std::string text;
  std::size_t n_words = 0;
  PhonemeSequence phonemes;
  SegmentRef segment;
};

enum class NegativeClass { kEasy, kHard, kRejected };
std::string_view to_string(NegativeClass c);

// One (audio, enrolled text) example. `text`/`phonemes` are the enrolled
// keyword; `audio_text`/`audio_phonemes` transcribe the audio segment.
struct PairRecord {
  SegmentRef segment;
  std::string audio_text;
  PhonemeSequence audio_phonemes;
  std::string text;
  PhonemeSequence phonemes;
  int label = 0;
  MatchType match;
  std::size_t n_words = 0;
  // Easy/Hard for negatives, nullopt for positives.
  std::optional<NegativeClass> negative_class;
};

enum class Difficulty { kEasy, kHard };
std::string_view to_string(Difficulty d);

struct Episode {
  std::string anchor;
  PhonemeSequence anchor_phonemes;
  std::size_t n_words = 0;
  Difficulty difficulty = Difficulty::kEasy;
  std::vector<PairRecord> positives;
  std::vector<PairRecord> negatives;
};

// All contiguous n-word windows (stride 1), 1 <= n <= 4. Phonemes are left
// empty; see attach_phonemes().
std::vector<Phrase> split_phrases(const AlignedUtterance& u, std::size_t n);
void attach_phonemes(std::vector<Phrase>& phrases, const Lexicon& lex);

inline constexpr std::size_t kDefaultHardThreshold = 2;

// Phoneme edit distance 0 -> Rejected, 1..threshold -> Hard, else Easy.
NegativeClass classify_negative(const Phrase& anchor, const Phrase& cand,
                                std::size_t threshold = kDefaultHardThreshold);
NegativeClass classify_negative(const PhonemeSequence& anchor, const PhonemeSequence& cand,
                                std::size_t threshold = kDefaultHardThreshold);

// Relation between the enrolled phonemes and the phonemes actually spoken.
MatchType determine_match_type(const PhonemeSequence& anchor, const PhonemeSequence& audio);

struct EpisodeSet {
  std::vector<Episode> episodes;
  std::size_t skipped_anchors = 0;  // too few recordings or negatives
};

// Groups phrases by text; each anchor with >= n_pos recordings yields up to
// one hard and one easy episode, drawing negatives with distinct texts and
// the same word count. Deterministic per seed.
EpisodeSet build_episodes(const std::vector<Phrase>& phrases, std::size_t n_pos,
                          std::size_t n_neg, std::uint64_t seed,
                          std::size_t hard_threshold = kDefaultHardThreshold);

std::vector<PairRecord> flatten(const std::vector<Episode>& episodes);

// ---------------------------------------------------------------------------
// Audio access

class AudioSource {
 public:
  virtual ~AudioSource() = default;
  virtual Waveform load(const SegmentRef& seg) const = 0;
};

// Paths in segment refs are relative to root.
class DirectoryAudio : public AudioSource {
 public:
  explicit DirectoryAudio(std::filesystem::path root) : root_(std::move(root)) {}
  Waveform load(const SegmentRef& seg) const override;

 private:
  std::filesystem::path root_;
};

class MemoryAudio : public AudioSource {
 public:
  explicit MemoryAudio(const std::map<std::string, Waveform>* store) : store_(store) {}
  Waveform load(const SegmentRef& seg) const override;

 private:
  const std::map<std::string, Waveform>* store_;
};

// A pair with its waveform and clean log-mel features loaded.
struct LabeledPair {
  PairRecord record;
  Waveform audio;
  Tensor features;  // [T, 40]
};

LabeledPair materialize(const PairRecord& record, const AudioSource& audio);
std::vector<LabeledPair> materialize(const std::vector<PairRecord>& records,
                                     const AudioSource& audio);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct ToyCorpusOptions {
  double phoneme_ms = 100.0;
  double tempo_jitter = 0.15;       // relative duration spread per phoneme
  double pitch_jitter = 0.015;      // relative frequency spread per phoneme
  double amplitude = 0.3;
  double background_noise = 0.003;  // white noise std
  std::size_t eval_episodes_per_keyword = 5;
  double babble_seconds = 4.0;
  std::size_t babble_files = 2;
  std::size_t babble_talkers = 3;
};

// Keywords are phrases of made-up CV-syllable words; every phoneme is a
// fixed-frequency tone. Keywords come in families (base, same front with a
// new last word, new first word with the same back) so the negatives cover
// every match type.
struct ToyCorpus {
  Lexicon lexicon;
  std::vector<std::string> keywords;
  std::vector<PairRecord> train;
  std::vector<Episode> eval;
  std::map<std::string, Waveform> audio;  // segment id -> waveform
  std::vector<std::string> noise;         // ids of babble recordings in `audio`
};

// Tone frequency in Hz for the phonemes used by the toy corpus.
const std::map<int, double>& toy_phoneme_tones();

// Renders a phoneme sequence as a tone sequence. Deterministic per seed.
Waveform render_toy_phonemes(const PhonemeSequence& seq, std::uint64_t seed,
                             const ToyCorpusOptions& opt = {});

ToyCorpus synth_toy_corpus(std::size_t n_keywords, std::size_t n_samples_per, std::uint64_t seed,
                           const ToyCorpusOptions& opt = {});

}  // namespace cmcd

#endif  // CMCD_CORPUS_H_
