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

#ifndef CMCD_MODEL_H_
#define CMCD_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <utility>
#include <vector>

#include "cmcd/autodiff.h"
#include "cmcd/dsp.h"
#include "cmcd/tensor.h"
#include "cmcd/text.h"

namespace cmcd {

struct ModelDims {
  std::size_t n_mels = kNumMelBins;
  std::size_t conv_channels = 128;
  std::size_t embed = 128;  // m; also d_k of the attention
  std::size_t n_phonemes = PhonemeInventory::kSize;
  std::size_t kernel = 5;

  bool operator==(const ModelDims&) const = default;
};

// Trainable weights of the audio encoder, text encoder and pattern
// discriminator. The pattern extractor has no weights. The same struct holds
// gradients and optimizer moments.
struct ModelParams {
  ModelDims dims;
  // Audio encoder.
  Tensor conv1_w, conv1_b;  // [C, n_mels, k], [C]; stride 2
  Tensor conv2_w, conv2_b;  // [C, C, k], [C]
  Tensor gru1_wx, gru1_wh, gru1_b;  // [C, 3m], [m, 3m], [3m]
  Tensor gru2_wx, gru2_wh, gru2_b;  // [m, 3m], [m, 3m], [3m]
  // Text encoder.
  Tensor text_w, text_b;  // [|P|, m], [m]
  // Pattern discriminator.
  Tensor disc_wx, disc_wh, disc_b;  // [m, 3m], [m, 3m], [3m]
  Tensor out_w, out_b;              // [m, 1], [1]

  std::vector<std::pair<std::string_view, Tensor*>> named();
  std::vector<std::pair<std::string_view, const Tensor*>> named() const;

  // Same layout, all zeros.
  static ModelParams zeros(const ModelDims& dims);
  bool operator==(const ModelParams& o) const;
};

// Glorot-uniform weights, zero biases; deterministic per seed.
ModelParams init_params(std::uint64_t seed, const ModelDims& dims = {});

// Glorot limit sqrt(6 / (fan_in + fan_out)) used for a named weight.
double glorot_limit(const ModelDims& dims, std::string_view name);

// Parameters bound as leaves on one tape.
struct ParamVars {
  Var conv1_w, conv1_b, conv2_w, conv2_b;
  Var gru1_wx, gru1_wh, gru1_b, gru2_wx, gru2_wh, gru2_b;
  Var text_w, text_b;
  Var disc_wx, disc_wh, disc_b, out_w, out_b;
  Var zero_state;  // [m] constant initial hidden state
  std::size_t embed = 0;

  static ParamVars bind(Tape& tape, const ModelParams& params, bool requires_grad = true);
  // Gradients of the bound leaves after tape.backward().
  ModelParams gradients(const ModelDims& dims) const;
};

// conv(stride 2) -> relu -> conv -> relu -> GRU -> GRU: [T, n_mels] -> [ceil(T/2), m].
Var encode_audio(Var features, const ParamVars& p);
// one-hot -> affine: [T_t] -> [T_t, m].
Var encode_text(const PhonemeSequence& seq, const ParamVars& p);

struct PatternVars {
  Var affinity;   // [T_t, T_a], row-stochastic
  Var attention;  // [T_t, m]
};
// A = softmax(E_t E_a^T / sqrt(m)), Attn = A E_a.
PatternVars pattern_extract(Var text_embedding, Var audio_embedding);

// GRU over Attn rows, last state -> affine -> logit. Returns the logit;
// apply sigmoid for the probability.
Var discriminate_logit(Var attention, const ParamVars& p);

struct ForwardVars {
  Var audio_embedding;
  Var text_embedding;
  Var affinity;
  Var attention;
  Var logit;
};
ForwardVars forward_graph(Tape& tape, const ParamVars& p, const Tensor& features,
                          const PhonemeSequence& seq);

// Value-level API.
struct ForwardOutput {
  double prob = 0.5;
  double logit = 0.0;
  Tensor affinity;   // [T_t, T_a]
  Tensor audio_embedding;  // [T_a, m]
};

Tensor encode_audio(const Tensor& features, const ModelParams& params);
Tensor encode_text(const PhonemeSequence& seq, const ModelParams& params);
std::pair<Tensor, Tensor> pattern_extract(const Tensor& text_embedding,
                                          const Tensor& audio_embedding);
double discriminate(const Tensor& attention, const ModelParams& params);
ForwardOutput forward(const Tensor& features, const PhonemeSequence& seq,
                      const ModelParams& params);

inline std::size_t audio_frames_after_encoder(std::size_t frames) { return (frames + 1) / 2; }

// Binary checkpoint: magic "CMCDCKPT", format version, dims, then each named
// tensor as (name, rank, shape, little-endian doubles). Round trip is exact.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace cmcd

#endif  // CMCD_MODEL_H_
