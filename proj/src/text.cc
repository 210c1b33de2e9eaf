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

#include "cmcd/text.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "cmcd/error.h"

namespace cmcd {

namespace {

constexpr std::array<std::string_view, PhonemeInventory::kNumPhonemes> kSymbols = {
    "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH", "EH", "ER", "EY",
    "F",  "G",  "HH", "IH", "IY", "JH", "K",  "L",  "M",  "N",  "NG", "OW", "OY",
    "P",  "R",  "S",  "SH", "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};

constexpr std::string_view kPadSymbol = "<pad>";

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::optional<int> PhonemeInventory::id(std::string_view symbol) {
  while (!symbol.empty() && std::isdigit(static_cast<unsigned char>(symbol.back())))
    symbol.remove_suffix(1);
  const std::string key = upper(symbol);
  for (std::size_t i = 0; i < kSymbols.size(); ++i)
    if (kSymbols[i] == key) return static_cast<int>(i);
  return std::nullopt;
}

std::string_view PhonemeInventory::symbol(int id) {
  if (id == kPadId) return kPadSymbol;
  if (id < 0 || id >= static_cast<int>(kNumPhonemes)) throw ValueError("invalid phoneme id " + std::to_string(id));
  return kSymbols[static_cast<std::size_t>(id)];
}

PhonemeSequence parse_phonemes(std::string_view symbols) {
  PhonemeSequence seq;
  std::istringstream in{std::string(symbols)};
  std::string tok;
  while (in >> tok) {
    const auto id = PhonemeInventory::id(tok);
    if (!id) throw ParseError("unknown phoneme '" + tok + "'");
    seq.ids.push_back(*id);
  }
  return seq;
}

std::string format_phonemes(const PhonemeSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (i) out += ' ';
    out += PhonemeInventory::symbol(seq.ids[i]);
  }
  return out;
}

void Lexicon::add(std::string word, PhonemeSequence pron) {
  entries_.emplace(std::move(word), std::move(pron));
}

const PhonemeSequence* Lexicon::find(std::string_view word) const {
  auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

Lexicon parse_dictionary(std::istream& in) {
  Lexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind(";;;", 0) == 0) continue;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    if (auto paren = word.find('('); paren != std::string::npos) {
      if (word.back() != ')' || paren == 0) throw ParseError("malformed variant '" + word + "'", lineno);
      word.resize(paren);
    }
    word = upper(word);
    PhonemeSequence pron;
    pron.source_text = word;
    std::string sym;
    while (fields >> sym) {
      const auto id = PhonemeInventory::id(sym);
      if (!id) throw ParseError("unknown phoneme '" + sym + "' for " + word, lineno);
      pron.ids.push_back(*id);
    }
    if (pron.ids.empty()) throw ParseError("entry '" + word + "' has no phonemes", lineno);
    lex.add(std::move(word), std::move(pron));
  }
  return lex;
}

Lexicon load_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read dictionary: " + path.string());
  try {
    return parse_dictionary(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.line());
  }
}

void write_dictionary(const std::filesystem::path& path, const Lexicon& lex) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dictionary: " + path.string());
  for (const auto& [word, pron] : lex.entries()) out << word << "  " << format_phonemes(pron) << '\n';
}

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    std::string clean;
    for (char c : tok) {
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '\'')
        clean += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    while (!clean.empty() && clean.front() == '\'') clean.erase(clean.begin());
    while (!clean.empty() && clean.back() == '\'') clean.pop_back();
    if (!clean.empty()) words.push_back(std::move(clean));
  }
  return words;
}

PhonemeSequence rule_g2p(std::string_view word) {
  struct Rule {
    std::string_view letters;
    std::string_view phonemes;
  };
  static constexpr Rule kDigraphs[] = {
      {"CH", "CH"}, {"SH", "SH"}, {"TH", "TH"}, {"PH", "F"},  {"NG", "NG"}, {"CK", "K"},
      {"QU", "K W"}, {"EE", "IY"}, {"OO", "UW"}, {"AI", "EY"}, {"AY", "EY"}, {"OU", "AW"},
      {"OW", "OW"}, {"OA", "OW"}, {"IE", "IY"}, {"EA", "IY"}};
  static constexpr std::string_view kLetters[26] = {
      "AH", "B", "K", "D", "EH", "F", "G", "HH", "IH", "JH", "K", "L",   "M",
      "N",  "AA", "P", "K", "R", "S", "T", "AH", "V",  "W",  "K S", "Y", "Z"};

  std::string letters;
  for (char c : upper(word))
    if (std::isalpha(static_cast<unsigned char>(c))) letters += c;
  PhonemeSequence seq;
  seq.source_text = std::string(word);
  auto emit = [&](std::string_view phones) {
    for (int id : parse_phonemes(phones).ids) seq.ids.push_back(id);
  };
  std::size_t i = 0;
  while (i < letters.size()) {
    bool matched = false;
    if (i + 1 < letters.size()) {
      const std::string_view pair(letters.data() + i, 2);
      for (const Rule& r : kDigraphs) {
        if (r.letters == pair) {
          emit(r.phonemes);
          i += 2;
          matched = true;
          break;
        }
      }
    }
    if (matched) continue;
    // A doubled letter outside a digraph is pronounced once.
    if (i == 0 || letters[i] != letters[i - 1]) emit(kLetters[letters[i] - 'A']);
    ++i;
  }
  return seq;
}

PhonemeSequence g2p(std::string_view text, const Lexicon& lex) {
  const auto words = normalize_words(text);
  if (words.empty()) throw ValueError("g2p: empty text");
  PhonemeSequence seq;
  seq.source_text = std::string(text);
  for (const std::string& w : words) {
    const PhonemeSequence* hit = lex.find(w);
    const PhonemeSequence pron = hit ? *hit : rule_g2p(w);
    seq.ids.insert(seq.ids.end(), pron.ids.begin(), pron.ids.end());
  }
  if (seq.ids.empty()) throw ValueError("g2p: no pronounceable letters in '" + std::string(text) + "'");
  return seq;
}

namespace {

template <typename Seq>
std::size_t edit_distance(const Seq& a, const Seq& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::size_t levenshtein(std::span<const int> a, std::span<const int> b) { return edit_distance(a, b); }
std::size_t levenshtein(std::string_view a, std::string_view b) { return edit_distance(a, b); }

Tensor phoneme_onehot(const PhonemeSequence& seq) {
  if (seq.empty()) throw ValueError("phoneme_onehot: empty sequence");
  Tensor out({seq.size(), PhonemeInventory::kSize});
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const int id = seq.ids[t];
    if (id < 0 || id >= static_cast<int>(PhonemeInventory::kSize))
      throw ValueError("phoneme_onehot: invalid id " + std::to_string(id));
    out(t, static_cast<std::size_t>(id)) = 1.0;
  }
  return out;
}

}  // namespace cmcd
