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

#include "cmcd/corpus.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <numbers>
#include <random>
#include <set>

#include "cmcd/error.h"
#include "cmcd/seed.h"

namespace cmcd {

std::string_view to_string(NegativeClass c) {
  switch (c) {
    case NegativeClass::kEasy: return "easy";
    case NegativeClass::kHard: return "hard";
    case NegativeClass::kRejected: return "rejected";
  }
  return "easy";
}

std::string_view to_string(Difficulty d) { return d == Difficulty::kHard ? "hard" : "easy"; }

void AlignedUtterance::validate() const {
  double last_end = 0.0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const WordSpan& w = words[i];
    if (!(w.start >= 0 && w.start < w.end))
      throw ValueError(audio + ": word '" + w.text + "' has invalid span");
    if (i > 0 && w.start < last_end)
      throw ValueError(audio + ": word '" + w.text + "' overlaps the previous word");
    last_end = w.end;
  }
}

std::vector<Phrase> split_phrases(const AlignedUtterance& u, std::size_t n) {
  if (n < 1 || n > 4) throw ValueError("split_phrases: n must be in [1, 4]");
  u.validate();
  std::vector<Phrase> out;
  if (u.words.size() < n) return out;
  for (std::size_t i = 0; i + n <= u.words.size(); ++i) {
    Phrase p;
    p.n_words = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j) p.text += ' ';
      for (char c : u.words[i + j].text)
        p.text += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    p.segment = {u.audio, u.words[i].start, u.words[i + n - 1].end};
    out.push_back(std::move(p));
  }
  return out;
}

void attach_phonemes(std::vector<Phrase>& phrases, const Lexicon& lex) {
  for (Phrase& p : phrases) p.phonemes = g2p(p.text, lex);
}

NegativeClass classify_negative(const PhonemeSequence& anchor, const PhonemeSequence& cand,
                                std::size_t threshold) {
  if (threshold < 1) throw ValueError("hard-negative threshold must be >= 1");
  const std::size_t d = levenshtein(anchor.ids, cand.ids);
  if (d == 0) return NegativeClass::kRejected;
  return d <= threshold ? NegativeClass::kHard : NegativeClass::kEasy;
}

NegativeClass classify_negative(const Phrase& anchor, const Phrase& cand, std::size_t threshold) {
  return classify_negative(anchor.phonemes, cand.phonemes, threshold);
}

MatchType determine_match_type(const PhonemeSequence& anchor, const PhonemeSequence& audio) {
  if (anchor.empty() || audio.empty()) throw ValueError("determine_match_type: empty sequence");
  if (anchor.ids == audio.ids) return {MatchKind::kFull, anchor.size()};
  const std::size_t shortest = std::min(anchor.size(), audio.size());
  std::size_t prefix = 0;
  while (prefix < shortest && anchor.ids[prefix] == audio.ids[prefix]) ++prefix;
  if (prefix > 0 && prefix < shortest) return {MatchKind::kPartialFront, prefix};
  std::size_t suffix = 0;
  while (suffix < shortest &&
         anchor.ids[anchor.size() - 1 - suffix] == audio.ids[audio.size() - 1 - suffix])
    ++suffix;
  if (prefix == 0 && suffix > 0) return {MatchKind::kPartialBack, 0};
  return {MatchKind::kNon, 0};
}

namespace {

PairRecord make_pair(const SegmentRef& seg, const std::string& audio_text,
                     const PhonemeSequence& audio_ph, const std::string& text,
                     const PhonemeSequence& text_ph, std::size_t n_words,
                     std::size_t hard_threshold) {
  PairRecord r;
  r.segment = seg;
  r.audio_text = audio_text;
  r.audio_phonemes = audio_ph;
  r.text = text;
  r.phonemes = text_ph;
  r.match = determine_match_type(text_ph, audio_ph);
  r.label = r.match.positive() ? 1 : 0;
  r.n_words = n_words;
  if (!r.label) r.negative_class = classify_negative(text_ph, audio_ph, hard_threshold);
  return r;
}

}  // namespace

EpisodeSet build_episodes(const std::vector<Phrase>& phrases, std::size_t n_pos,
                          std::size_t n_neg, std::uint64_t seed, std::size_t hard_threshold) {
  if (n_pos < 1 || n_neg < 1) throw ValueError("build_episodes: need n_pos, n_neg >= 1");
  std::map<std::string, std::vector<std::size_t>> by_text;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (phrases[i].phonemes.empty())
      throw ValueError("build_episodes: phrase '" + phrases[i].text + "' has no phonemes");
    by_text[phrases[i].text].push_back(i);
  }

  EpisodeSet out;
  std::size_t anchor_index = 0;
  for (const auto& [text, members] : by_text) {
    const std::uint64_t anchor_seed = derive_seed(seed, anchor_index++);
    if (members.size() < n_pos) {
      ++out.skipped_anchors;
      continue;
    }
    std::mt19937_64 rng(anchor_seed);
    const Phrase& anchor = phrases[members.front()];

    std::vector<std::size_t> pos = members;
    std::shuffle(pos.begin(), pos.end(), rng);
    pos.resize(n_pos);

    std::vector<const std::vector<std::size_t>*> hard, easy;
    for (const auto& [other_text, other_members] : by_text) {
      const Phrase& cand = phrases[other_members.front()];
      if (other_text == text || cand.n_words != anchor.n_words) continue;
      switch (classify_negative(anchor, cand, hard_threshold)) {
        case NegativeClass::kHard: hard.push_back(&other_members); break;
        case NegativeClass::kEasy: easy.push_back(&other_members); break;
        case NegativeClass::kRejected: break;
      }
    }

    bool built = false;
    for (const Difficulty diff : {Difficulty::kHard, Difficulty::kEasy}) {
      auto pool = diff == Difficulty::kHard ? hard : easy;
      if (pool.size() < n_neg) continue;
      std::shuffle(pool.begin(), pool.end(), rng);
      Episode ep;
      ep.anchor = text;
      ep.anchor_phonemes = anchor.phonemes;
      ep.n_words = anchor.n_words;
      ep.difficulty = diff;
      for (std::size_t idx : pos) {
        const Phrase& p = phrases[idx];
        ep.positives.push_back(make_pair(p.segment, p.text, p.phonemes, text, anchor.phonemes,
                                         anchor.n_words, hard_threshold));
      }
      for (std::size_t i = 0; i < n_neg; ++i) {
        const auto& recs = *pool[i];
        std::uniform_int_distribution<std::size_t> pick(0, recs.size() - 1);
        const Phrase& p = phrases[recs[pick(rng)]];
        ep.negatives.push_back(make_pair(p.segment, p.text, p.phonemes, text, anchor.phonemes,
                                         anchor.n_words, hard_threshold));
      }
      out.episodes.push_back(std::move(ep));
      built = true;
    }
    if (!built) ++out.skipped_anchors;
  }
  return out;
}

std::vector<PairRecord> flatten(const std::vector<Episode>& episodes) {
  std::vector<PairRecord> out;
  for (const Episode& ep : episodes) {
    out.insert(out.end(), ep.positives.begin(), ep.positives.end());
    out.insert(out.end(), ep.negatives.begin(), ep.negatives.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Audio access

Waveform DirectoryAudio::load(const SegmentRef& seg) const {
  const Waveform whole = read_wav(root_ / seg.audio);
  if (seg.start == 0.0 && seg.end < 0) return whole;
  return slice(whole, seg.start, seg.end);
}

Waveform MemoryAudio::load(const SegmentRef& seg) const {
  auto it = store_->find(seg.audio);
  if (it == store_->end()) throw IoError("audio not found: " + seg.audio);
  if (seg.start == 0.0 && seg.end < 0) return it->second;
  return slice(it->second, seg.start, seg.end);
}

LabeledPair materialize(const PairRecord& record, const AudioSource& audio) {
  LabeledPair p;
  p.record = record;
  p.audio = audio.load(record.segment);
  p.features = log_mel(p.audio);
  return p;
}

std::vector<LabeledPair> materialize(const std::vector<PairRecord>& records,
                                     const AudioSource& audio) {
  std::vector<LabeledPair> out;
  out.reserve(records.size());
  for (const PairRecord& r : records) out.push_back(materialize(r, audio));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

struct ToySymbol {
  std::string_view phoneme;
  std::string_view spelling;
  int mel_filter;  // tone sits on this filter's center frequency
};

constexpr ToySymbol kConsonants[] = {{"B", "b", 4},  {"D", "d", 8},  {"G", "g", 12}, {"K", "k", 16},
                                     {"M", "m", 20}, {"N", "n", 24}, {"S", "s", 28}, {"T", "t", 32}};
constexpr ToySymbol kVowels[] = {{"AA", "a", 6},   {"IY", "ee", 10}, {"UW", "oo", 14},
                                 {"EH", "e", 18},  {"OW", "o", 22},  {"AE", "ae", 26},
                                 {"ER", "er", 30}, {"AY", "ai", 34}};

struct ToyWord {
  std::string spelling;
  PhonemeSequence phonemes;
};

ToyWord make_word(std::size_t syllable) {
  const ToySymbol& c = kConsonants[syllable / std::size(kVowels)];
  const ToySymbol& v = kVowels[syllable % std::size(kVowels)];
  ToyWord w;
  w.spelling = std::string(c.spelling) + std::string(v.spelling);
  w.phonemes.ids = {*PhonemeInventory::id(c.phoneme), *PhonemeInventory::id(v.phoneme)};
  w.phonemes.source_text = w.spelling;
  return w;
}

std::size_t consonant_of(std::size_t syllable) { return syllable / std::size(kVowels); }

struct ToyKeyword {
  std::string text;
  PhonemeSequence phonemes;
  std::size_t n_words = 0;
};

ToyKeyword make_keyword(const std::vector<std::size_t>& syllables) {
  ToyKeyword k;
  for (std::size_t i = 0; i < syllables.size(); ++i) {
    const ToyWord w = make_word(syllables[i]);
    if (i) k.text += ' ';
    k.text += w.spelling;
    k.phonemes.ids.insert(k.phonemes.ids.end(), w.phonemes.ids.begin(), w.phonemes.ids.end());
  }
  k.phonemes.source_text = k.text;
  k.n_words = syllables.size();
  return k;
}

Waveform babble(std::size_t samples, std::uint64_t seed, const ToyCorpusOptions& opt) {
  const double talkers = static_cast<double>(opt.babble_talkers);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kConsonants) * std::size(kVowels) - 1);
  Waveform out;
  out.samples.assign(samples, 0.0);
  for (std::size_t talker = 0; talker < opt.babble_talkers; ++talker) {
    std::size_t filled = 0;
    std::uint64_t chunk = 0;
    while (filled < samples) {
      std::vector<std::size_t> sylls(4);
      for (auto& s : sylls) s = pick(rng);
      const Waveform w = render_toy_phonemes(make_keyword(sylls).phonemes,
                                             derive_seed(seed, talker, chunk++), opt);
      for (std::size_t i = 0; i < w.samples.size() && filled < samples; ++i)
        out.samples[filled++] += w.samples[i];
    }
  }
  std::normal_distribution<double> white(0.0, 0.01);
  for (double& s : out.samples) s = s / talkers + white(rng);
  return out;
}

}  // namespace

const std::map<int, double>& toy_phoneme_tones() {
  static const std::map<int, double> tones = [] {
    const auto centers = mel_center_frequencies(16000);
    std::map<int, double> t;
    for (const auto* set : {&kConsonants, &kVowels})
      for (const ToySymbol& s : *set) t[*PhonemeInventory::id(s.phoneme)] = centers[s.mel_filter];
    return t;
  }();
  return tones;
}

Waveform render_toy_phonemes(const PhonemeSequence& seq, std::uint64_t seed,
                             const ToyCorpusOptions& opt) {
  constexpr int kRate = 16000;
  constexpr double kRampSec = 0.005;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto jitter = [&](double spread) { return 1.0 + spread * (2.0 * unit(rng) - 1.0); };
  const auto& tones = toy_phoneme_tones();

  Waveform w;
  w.sample_rate = kRate;
  auto silence = [&] {
    const auto n = static_cast<std::size_t>(std::lround(kRate * (0.02 + 0.02 * unit(rng))));
    w.samples.insert(w.samples.end(), n, 0.0);
  };
  silence();
  for (int id : seq.ids) {
    auto it = tones.find(id);
    if (it == tones.end())
      throw ValueError("no toy tone for phoneme " + std::string(PhonemeInventory::symbol(id)));
    const double freq = it->second * jitter(opt.pitch_jitter);
    const double amp = opt.amplitude * jitter(0.2);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    const auto n = static_cast<std::size_t>(
        std::lround(kRate * opt.phoneme_ms / 1000.0 * jitter(opt.tempo_jitter)));
    const double ramp = kRampSec * kRate;
    for (std::size_t i = 0; i < n; ++i) {
      const double edge = std::min<double>(i, n - 1 - i);
      const double env = edge >= ramp ? 1.0 : 0.5 - 0.5 * std::cos(std::numbers::pi * edge / ramp);
      w.samples.push_back(amp * env * std::sin(2.0 * std::numbers::pi * freq * i / kRate + phase));
    }
  }
  silence();
  std::normal_distribution<double> white(0.0, opt.background_noise);
  for (double& s : w.samples) s += white(rng);
  return w;
}

ToyCorpus synth_toy_corpus(std::size_t n_keywords, std::size_t n_samples_per, std::uint64_t seed,
                           const ToyCorpusOptions& opt) {
  if (n_keywords < 2) throw ValueError("synth_toy_corpus: need at least 2 keywords");
  if (n_samples_per < 1) throw ValueError("synth_toy_corpus: need at least 1 sample per keyword");
  if (opt.babble_files > 0 && opt.babble_talkers < 1) throw ValueError("synth_toy_corpus: babble needs at least one talker");
  constexpr std::size_t kSyllables = std::size(kConsonants) * std::size(kVowels);
  if (n_keywords > kSyllables / 3) throw ValueError("synth_toy_corpus: too many keywords");

  std::mt19937_64 rng(derive_seed(seed, 1));
  std::vector<std::size_t> pool(kSyllables);
  for (std::size_t i = 0; i < kSyllables; ++i) pool[i] = i;
  std::shuffle(pool.begin(), pool.end(), rng);
  auto take = [&](auto accept) {
    for (auto it = pool.begin(); it != pool.end(); ++it) {
      if (accept(*it)) {
        const std::size_t s = *it;
        pool.erase(it);
        return s;
      }
    }
    throw ValueError("synth_toy_corpus: syllable pool exhausted");
  };
  auto any = [](std::size_t) { return true; };

  // Families: base, base with a new last word, base with a new first word.
  std::vector<ToyKeyword> keywords;
  for (std::size_t family = 0; keywords.size() < n_keywords; ++family) {
    const std::size_t remaining = n_keywords - keywords.size();
    const std::size_t words = remaining == 1 ? 1 : 2 + family % 2;
    std::vector<std::size_t> base(words);
    for (auto& s : base) s = take(any);
    keywords.push_back(make_keyword(base));
    if (remaining >= 2) {
      auto front = base;
      front.back() = take(any);
      keywords.push_back(make_keyword(front));
    }
    if (remaining >= 3) {
      auto back = base;
      const std::size_t first_consonant = consonant_of(base.front());
      back.front() = take([&](std::size_t s) { return consonant_of(s) != first_consonant; });
      keywords.push_back(make_keyword(back));
    }
  }

  ToyCorpus corpus;
  for (const ToyKeyword& k : keywords) {
    corpus.keywords.push_back(k.text);
    std::size_t pos = 0;
    for (const std::string& w : normalize_words(k.text)) {
      PhonemeSequence pron;
      pron.source_text = w;
      pron.ids.assign(k.phonemes.ids.begin() + pos, k.phonemes.ids.begin() + pos + 2);
      corpus.lexicon.add(w, pron);
      pos += 2;
    }
  }

  auto record = [&](const std::string& id, std::size_t audio_kw, std::uint64_t render_seed) {
    corpus.audio[id] = render_toy_phonemes(keywords[audio_kw].phonemes, render_seed, opt);
    return SegmentRef{id, 0.0, -1.0};
  };
  auto pair_for = [&](const SegmentRef& seg, std::size_t audio_kw, std::size_t text_kw) {
    const ToyKeyword& a = keywords[audio_kw];
    const ToyKeyword& t = keywords[text_kw];
    return make_pair(seg, a.text, a.phonemes, t.text, t.phonemes, t.n_words, kDefaultHardThreshold);
  };

  // Training pairs: every recording against every keyword text.
  for (std::size_t k = 0; k < keywords.size(); ++k) {
    for (std::size_t s = 0; s < n_samples_per; ++s) {
      const std::string id = "train/k" + std::to_string(k) + "_s" + std::to_string(s) + ".wav";
      const SegmentRef seg = record(id, k, derive_seed(seed, 2, k * 1000 + s));
      corpus.train.push_back(pair_for(seg, k, k));
      for (std::size_t j = 0; j < keywords.size(); ++j)
        if (j != k) corpus.train.push_back(pair_for(seg, k, j));
    }
  }

  // Held-out episodes from fresh recordings. Even episodes draw negatives
  // from the anchor's hard neighbours when it has any.
  constexpr std::size_t kPerEpisode = 3;
  for (std::size_t k = 0; k < keywords.size(); ++k) {
    std::vector<std::size_t> hard, easy;
    for (std::size_t j = 0; j < keywords.size(); ++j) {
      if (j == k) continue;
      const auto c = classify_negative(keywords[k].phonemes, keywords[j].phonemes);
      (c == NegativeClass::kHard ? hard : easy).push_back(j);
    }
    std::mt19937_64 erng(derive_seed(seed, 3, k));
    for (std::size_t e = 0; e < opt.eval_episodes_per_keyword; ++e) {
      const bool use_hard = !hard.empty() && (e % 2 == 0 || easy.empty());
      std::vector<std::size_t> negs = use_hard ? hard : easy;
      std::shuffle(negs.begin(), negs.end(), erng);
      Episode ep;
      ep.anchor = keywords[k].text;
      ep.anchor_phonemes = keywords[k].phonemes;
      ep.n_words = keywords[k].n_words;
      ep.difficulty = use_hard ? Difficulty::kHard : Difficulty::kEasy;
      const std::string prefix = "eval/a" + std::to_string(k) + "_e" + std::to_string(e);
      for (std::size_t i = 0; i < kPerEpisode; ++i) {
        const SegmentRef seg = record(prefix + "_p" + std::to_string(i) + ".wav", k,
                                      derive_seed(seed, 4, (k * 100 + e) * 10 + i));
        ep.positives.push_back(pair_for(seg, k, k));
      }
      for (std::size_t i = 0; i < kPerEpisode; ++i) {
        const std::size_t j = negs[i % negs.size()];
        const SegmentRef seg = record(prefix + "_n" + std::to_string(i) + ".wav", j,
                                      derive_seed(seed, 5, (k * 100 + e) * 10 + i));
        ep.negatives.push_back(pair_for(seg, j, k));
      }
      corpus.eval.push_back(std::move(ep));
    }
  }

  for (std::size_t b = 0; b < opt.babble_files; ++b) {
    const std::string id = "noise/babble" + std::to_string(b) + ".wav";
    corpus.audio[id] = babble(static_cast<std::size_t>(opt.babble_seconds * 16000),
                              derive_seed(seed, 6, b), opt);
    corpus.noise.push_back(id);
  }
  return corpus;
}

}  // namespace cmcd
