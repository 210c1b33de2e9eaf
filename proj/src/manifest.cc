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

#include "cmcd/manifest.h"

#include <fstream>
#include <functional>

#include "cmcd/error.h"
#include "json.hpp"

namespace cmcd {

using json = nlohmann::ordered_json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void for_each_line(const std::filesystem::path& path, const std::function<void(const json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), lineno);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.message(), lineno);
    } catch (const ValueError& e) {
      throw ParseError(path.string() + ": " + e.what(), lineno);
    }
  }
}

void put_segment(json& j, const SegmentRef& s) {
  j["audio"] = s.audio;
  j["start"] = s.start;
  if (s.end >= 0) j["end"] = s.end;
}

SegmentRef get_segment(const json& j) {
  SegmentRef s;
  s.audio = j.at("audio").get<std::string>();
  s.start = j.value("start", 0.0);
  s.end = j.contains("end") ? j.at("end").get<double>() : -1.0;
  return s;
}

PhonemeSequence get_phonemes(const json& j, const char* key, const std::string& text,
                             const Lexicon* lex) {
  if (j.contains(key)) {
    PhonemeSequence seq = parse_phonemes(j.at(key).get<std::string>());
    seq.source_text = text;
    if (seq.empty()) throw ParseError(std::string("empty '") + key + "'");
    return seq;
  }
  if (!lex) throw ParseError(std::string("missing '") + key + "' and no dictionary configured");
  return g2p(text, *lex);
}

json pair_to_json(const PairRecord& p) {
  json j;
  put_segment(j, p.segment);
  j["audio_text"] = p.audio_text;
  j["audio_phonemes"] = format_phonemes(p.audio_phonemes);
  j["text"] = p.text;
  j["phonemes"] = format_phonemes(p.phonemes);
  j["label"] = p.label;
  j["match"] = std::string(to_string(p.match.kind));
  j["k"] = p.match.boundary_k;
  j["n_words"] = p.n_words;
  if (p.negative_class) j["negative"] = std::string(to_string(*p.negative_class));
  return j;
}

PairRecord pair_from_json(const json& j, const Lexicon* lex) {
  PairRecord p;
  p.segment = get_segment(j);
  p.text = j.at("text").get<std::string>();
  p.audio_text = j.value("audio_text", p.text);
  p.phonemes = get_phonemes(j, "phonemes", p.text, lex);
  p.audio_phonemes = get_phonemes(j, "audio_phonemes", p.audio_text, lex);
  p.n_words = j.value("n_words", normalize_words(p.text).size());
  if (j.contains("match")) {
    p.match.kind = match_kind_from_string(j.at("match").get<std::string>());
    p.match.boundary_k = j.value("k", std::size_t{0});
  } else {
    p.match = determine_match_type(p.phonemes, p.audio_phonemes);
  }
  p.label = j.value("label", p.match.positive() ? 1 : 0);
  if ((p.label == 1) != p.match.positive())
    throw ParseError("label disagrees with match type for '" + p.text + "'");
  if (p.match.kind == MatchKind::kPartialFront &&
      (p.match.boundary_k == 0 || p.match.boundary_k >= p.phonemes.size()))
    throw ParseError("partial_front boundary out of range for '" + p.text + "'");
  if (p.match.kind == MatchKind::kFull) p.match.boundary_k = p.phonemes.size();
  if (j.contains("negative")) {
    const auto n = j.at("negative").get<std::string>();
    if (n == "easy") p.negative_class = NegativeClass::kEasy;
    else if (n == "hard") p.negative_class = NegativeClass::kHard;
    else throw ParseError("unknown negative class '" + n + "'");
  }
  return p;
}

}  // namespace

std::vector<AlignedUtterance> read_alignments(const std::filesystem::path& path) {
  std::vector<AlignedUtterance> out;
  for_each_line(path, [&](const json& j) {
    AlignedUtterance u;
    u.audio = j.at("audio").get<std::string>();
    for (const json& w : j.at("words"))
      u.words.push_back({w.at("w").get<std::string>(), w.at("start").get<double>(),
                         w.at("end").get<double>()});
    u.validate();
    out.push_back(std::move(u));
  });
  return out;
}

void write_alignments(const std::filesystem::path& path, const std::vector<AlignedUtterance>& us) {
  auto out = open_out(path);
  for (const AlignedUtterance& u : us) {
    json j;
    j["audio"] = u.audio;
    j["words"] = json::array();
    for (const WordSpan& w : u.words) j["words"].push_back({{"w", w.text}, {"start", w.start}, {"end", w.end}});
    out << j.dump() << '\n';
  }
}

void write_phrases(const std::filesystem::path& path, const std::vector<Phrase>& phrases) {
  auto out = open_out(path);
  for (const Phrase& p : phrases) {
    json j;
    j["text"] = p.text;
    j["n_words"] = p.n_words;
    j["phonemes"] = format_phonemes(p.phonemes);
    put_segment(j, p.segment);
    out << j.dump() << '\n';
  }
}

std::vector<Phrase> read_phrases(const std::filesystem::path& path) {
  std::vector<Phrase> out;
  for_each_line(path, [&](const json& j) {
    Phrase p;
    p.text = j.at("text").get<std::string>();
    p.n_words = j.at("n_words").get<std::size_t>();
    p.phonemes = parse_phonemes(j.at("phonemes").get<std::string>());
    p.phonemes.source_text = p.text;
    p.segment = get_segment(j);
    out.push_back(std::move(p));
  });
  return out;
}

void write_pairs(const std::filesystem::path& path, const std::vector<PairRecord>& pairs) {
  auto out = open_out(path);
  for (const PairRecord& p : pairs) out << pair_to_json(p).dump() << '\n';
}

std::vector<PairRecord> read_pairs(const std::filesystem::path& path, const Lexicon* lex) {
  std::vector<PairRecord> out;
  for_each_line(path, [&](const json& j) { out.push_back(pair_from_json(j, lex)); });
  return out;
}

void write_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes) {
  auto out = open_out(path);
  for (const Episode& ep : episodes) {
    json j;
    j["anchor"] = ep.anchor;
    j["anchor_phonemes"] = format_phonemes(ep.anchor_phonemes);
    j["n_words"] = ep.n_words;
    j["difficulty"] = std::string(to_string(ep.difficulty));
    j["positives"] = json::array();
    for (const PairRecord& p : ep.positives) j["positives"].push_back(pair_to_json(p));
    j["negatives"] = json::array();
    for (const PairRecord& p : ep.negatives) j["negatives"].push_back(pair_to_json(p));
    out << j.dump() << '\n';
  }
}

std::vector<Episode> read_episodes(const std::filesystem::path& path, const Lexicon* lex) {
  std::vector<Episode> out;
  for_each_line(path, [&](const json& j) {
    Episode ep;
    ep.anchor = j.at("anchor").get<std::string>();
    ep.anchor_phonemes = get_phonemes(j, "anchor_phonemes", ep.anchor, lex);
    ep.n_words = j.value("n_words", normalize_words(ep.anchor).size());
    const auto diff = j.value("difficulty", std::string("easy"));
    if (diff != "easy" && diff != "hard") throw ParseError("unknown difficulty '" + diff + "'");
    ep.difficulty = diff == "hard" ? Difficulty::kHard : Difficulty::kEasy;
    for (const json& p : j.at("positives")) ep.positives.push_back(pair_from_json(p, lex));
    for (const json& p : j.at("negatives")) ep.negatives.push_back(pair_from_json(p, lex));
    out.push_back(std::move(ep));
  });
  return out;
}

std::vector<std::string> read_path_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

void write_path_list(const std::filesystem::path& path, const std::vector<std::string>& items) {
  auto out = open_out(path);
  for (const auto& s : items) out << s << '\n';
}

}  // namespace cmcd
