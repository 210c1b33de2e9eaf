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

#ifndef CMCD_TEXT_H_
#define CMCD_TEXT_H_

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmcd/tensor.h"

namespace cmcd {

// 39 ARPAbet phonemes without stress digits, followed by one reserved pad.
class PhonemeInventory {
 public:
  static constexpr std::size_t kNumPhonemes = 39;
  static constexpr std::size_t kSize = kNumPhonemes + 1;
  static constexpr int kPadId = static_cast<int>(kNumPhonemes);

  // Id of an ARPAbet symbol; stress digits are ignored ("EH1" -> EH).
  static std::optional<int> id(std::string_view symbol);
  static std::string_view symbol(int id);
};

struct PhonemeSequence {
  std::vector<int> ids;
  std::string source_text;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const PhonemeSequence& o) const { return ids == o.ids; }
};

// Parses space separated ARPAbet symbols, e.g. "F R EH1 N D".
PhonemeSequence parse_phonemes(std::string_view symbols);
std::string format_phonemes(const PhonemeSequence& seq);

// Uppercase word -> pronunciation (first variant wins).
class Lexicon {
 public:
  void add(std::string word, PhonemeSequence pron);  // no-op if already present
  const PhonemeSequence* find(std::string_view word) const;
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, PhonemeSequence, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, PhonemeSequence, std::less<>> entries_;
};

// CMUdict text format. ";;;" lines are comments, "WORD(2)" variants fold onto
// the first pronunciation, stress digits are dropped.
Lexicon parse_dictionary(std::istream& in);
Lexicon load_dictionary(const std::filesystem::path& path);
void write_dictionary(const std::filesystem::path& path, const Lexicon& lex);

// Whitespace tokens of text, uppercased, with characters other than letters
// and apostrophes removed. Empty tokens are dropped.
std::vector<std::string> normalize_words(std::string_view text);

// Letter-to-sound fallback for out-of-vocabulary words. Digraphs first
// (CH SH TH PH NG CK QU EE OO AI AY OU OW OA IE EA), then single letters:
//   A AH  B B   C K   D D   E EH  F F   G G   H HH  I IH  J JH  K K   L L
//   M M   N N   O AA  P P   Q K   R R   S S   T T   U AH  V V   W W   X K S
//   Y Y   Z Z
// Repeated letters collapse to one ("LL" -> L) and apostrophes are skipped.
PhonemeSequence rule_g2p(std::string_view word);

// Phonemes of a phrase: per-word dictionary lookup with rule fallback,
// concatenated without separators. Throws ValueError on empty text.
PhonemeSequence g2p(std::string_view text, const Lexicon& lex);

// Unit-cost edit distance.
std::size_t levenshtein(std::span<const int> a, std::span<const int> b);
std::size_t levenshtein(std::string_view a, std::string_view b);

// [T_t, PhonemeInventory::kSize] one-hot rows.
Tensor phoneme_onehot(const PhonemeSequence& seq);

}  // namespace cmcd

#endif  // CMCD_TEXT_H_
