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

#ifndef CMCD_MANIFEST_H_
#define CMCD_MANIFEST_H_

// JSON-lines manifests. One self-describing object per line; phoneme
// sequences are space separated ARPAbet strings.
//
//   alignment: {"audio", "words": [{"w", "start", "end"}]}
//   phrase:    {"text", "n_words", "phonemes", "audio", "start", "end"}
//   pair:      {"audio", "start", "end", "audio_text", "audio_phonemes",
//               "text", "phonemes", "label", "match", "k", "n_words",
//               "negative" (negatives only: "easy" | "hard")}
//   episode:   {"anchor", "anchor_phonemes", "n_words", "difficulty",
//               "positives": [pair], "negatives": [pair]}
//
// A pair or phrase without "end" covers the file to its end.

#include <filesystem>
#include <string>
#include <vector>

#include "cmcd/corpus.h"

namespace cmcd {

std::vector<AlignedUtterance> read_alignments(const std::filesystem::path& path);
void write_alignments(const std::filesystem::path& path, const std::vector<AlignedUtterance>& us);

void write_phrases(const std::filesystem::path& path, const std::vector<Phrase>& phrases);
std::vector<Phrase> read_phrases(const std::filesystem::path& path);

void write_pairs(const std::filesystem::path& path, const std::vector<PairRecord>& pairs);
// Pairs missing phoneme fields are completed with g2p against lex.
std::vector<PairRecord> read_pairs(const std::filesystem::path& path, const Lexicon* lex = nullptr);

void write_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes);
std::vector<Episode> read_episodes(const std::filesystem::path& path, const Lexicon* lex = nullptr);

// Plain list of paths, one per line.
std::vector<std::string> read_path_list(const std::filesystem::path& path);
void write_path_list(const std::filesystem::path& path, const std::vector<std::string>& items);

}  // namespace cmcd

#endif  // CMCD_MANIFEST_H_
