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

#include "cmcd/model.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "cmcd/error.h"

namespace cmcd {

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'M', 'C', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

bool is_bias(std::string_view name) { return name.ends_with("_b"); }

// (fan_in, fan_out) of a weight tensor.
std::pair<double, double> fans(const Shape& shape) {
  if (shape.size() == 3) return {double(shape[1] * shape[2]), double(shape[0] * shape[2])};
  return {double(shape[0]), double(shape[1])};
}

template <typename Self, typename T>
std::vector<std::pair<std::string_view, T*>> named_impl(Self& p) {
  return {{"conv1_w", &p.conv1_w}, {"conv1_b", &p.conv1_b}, {"conv2_w", &p.conv2_w},
          {"conv2_b", &p.conv2_b}, {"gru1_wx", &p.gru1_wx}, {"gru1_wh", &p.gru1_wh},
          {"gru1_b", &p.gru1_b},   {"gru2_wx", &p.gru2_wx}, {"gru2_wh", &p.gru2_wh},
          {"gru2_b", &p.gru2_b},   {"text_w", &p.text_w},   {"text_b", &p.text_b},
          {"disc_wx", &p.disc_wx}, {"disc_wh", &p.disc_wh}, {"disc_b", &p.disc_b},
          {"out_w", &p.out_w},     {"out_b", &p.out_b}};
}

}  // namespace

std::vector<std::pair<std::string_view, Tensor*>> ModelParams::named() {
  return named_impl<ModelParams, Tensor>(*this);
}

std::vector<std::pair<std::string_view, const Tensor*>> ModelParams::named() const {
  return named_impl<const ModelParams, const Tensor>(*this);
}

bool ModelParams::operator==(const ModelParams& o) const {
  if (!(dims == o.dims)) return false;
  const auto a = named();
  const auto b = o.named();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(*a[i].second == *b[i].second)) return false;
  return true;
}

ModelParams ModelParams::zeros(const ModelDims& d) {
  if (d.n_mels == 0 || d.conv_channels == 0 || d.embed == 0 || d.n_phonemes == 0 || d.kernel % 2 == 0)
    throw ValueError("invalid model dimensions");
  const std::size_t c = d.conv_channels, m = d.embed, k = d.kernel;
  ModelParams p;
  p.dims = d;
  p.conv1_w = Tensor({c, d.n_mels, k});
  p.conv1_b = Tensor({c});
  p.conv2_w = Tensor({c, c, k});
  p.conv2_b = Tensor({c});
  p.gru1_wx = Tensor({c, 3 * m});
  p.gru1_wh = Tensor({m, 3 * m});
  p.gru1_b = Tensor({3 * m});
  p.gru2_wx = Tensor({m, 3 * m});
  p.gru2_wh = Tensor({m, 3 * m});
  p.gru2_b = Tensor({3 * m});
  p.text_w = Tensor({d.n_phonemes, m});
  p.text_b = Tensor({m});
  p.disc_wx = Tensor({m, 3 * m});
  p.disc_wh = Tensor({m, 3 * m});
  p.disc_b = Tensor({3 * m});
  p.out_w = Tensor({m, 1});
  p.out_b = Tensor({1});
  return p;
}

double glorot_limit(const ModelDims& dims, std::string_view name) {
  const ModelParams shapes = ModelParams::zeros(dims);
  for (const auto& [n, t] : shapes.named()) {
    if (n == name) {
      const auto [fan_in, fan_out] = fans(t->shape());
      return std::sqrt(6.0 / (fan_in + fan_out));
    }
  }
  throw ValueError("unknown parameter " + std::string(name));
}

ModelParams init_params(std::uint64_t seed, const ModelDims& dims) {
  ModelParams p = ModelParams::zeros(dims);
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : p.named()) {
    if (is_bias(name)) continue;
    const auto [fan_in, fan_out] = fans(t->shape());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : t->data()) v = dist(rng);
  }
  return p;
}

ParamVars ParamVars::bind(Tape& tape, const ModelParams& params, bool requires_grad) {
  ParamVars v;
  auto leaf = [&](const Tensor& t) { return tape.leaf(t, requires_grad); };
  v.conv1_w = leaf(params.conv1_w);
  v.conv1_b = leaf(params.conv1_b);
  v.conv2_w = leaf(params.conv2_w);
  v.conv2_b = leaf(params.conv2_b);
  v.gru1_wx = leaf(params.gru1_wx);
  v.gru1_wh = leaf(params.gru1_wh);
  v.gru1_b = leaf(params.gru1_b);
  v.gru2_wx = leaf(params.gru2_wx);
  v.gru2_wh = leaf(params.gru2_wh);
  v.gru2_b = leaf(params.gru2_b);
  v.text_w = leaf(params.text_w);
  v.text_b = leaf(params.text_b);
  v.disc_wx = leaf(params.disc_wx);
  v.disc_wh = leaf(params.disc_wh);
  v.disc_b = leaf(params.disc_b);
  v.out_w = leaf(params.out_w);
  v.out_b = leaf(params.out_b);
  v.zero_state = tape.constant(Tensor({params.dims.embed}));
  v.embed = params.dims.embed;
  return v;
}

ModelParams ParamVars::gradients(const ModelDims& dims) const {
  ModelParams g;
  g.dims = dims;
  g.conv1_w = conv1_w.grad();
  g.conv1_b = conv1_b.grad();
  g.conv2_w = conv2_w.grad();
  g.conv2_b = conv2_b.grad();
  g.gru1_wx = gru1_wx.grad();
  g.gru1_wh = gru1_wh.grad();
  g.gru1_b = gru1_b.grad();
  g.gru2_wx = gru2_wx.grad();
  g.gru2_wh = gru2_wh.grad();
  g.gru2_b = gru2_b.grad();
  g.text_w = text_w.grad();
  g.text_b = text_b.grad();
  g.disc_wx = disc_wx.grad();
  g.disc_wh = disc_wh.grad();
  g.disc_b = disc_b.grad();
  g.out_w = out_w.grad();
  g.out_b = out_b.grad();
  return g;
}

Var encode_audio(Var features, const ParamVars& p) {
  const Tensor& f = features.value();
  if (f.empty()) throw ValueError("encode_audio: empty features");
  if (f.rank() != 2 || f.cols() != p.conv1_w.value().dim(1))
    throw ShapeError("encode_audio: features must be [T, n_mels], got " + shape_str(f.shape()));
  Var h = relu(add_row_bias(conv1d(features, p.conv1_w, 2), p.conv1_b));
  h = relu(add_row_bias(conv1d(h, p.conv2_w, 1), p.conv2_b));
  h = gru(h, p.gru1_wx, p.gru1_wh, p.gru1_b, p.zero_state);
  return gru(h, p.gru2_wx, p.gru2_wh, p.gru2_b, p.zero_state);
}

Var encode_text(const PhonemeSequence& seq, const ParamVars& p) {
  if (seq.empty()) throw ValueError("encode_text: empty phoneme sequence");
  Tensor onehot = phoneme_onehot(seq);
  const std::size_t n_phonemes = p.text_w.value().rows();
  if (onehot.cols() != n_phonemes) {
    // Test builds may use a reduced inventory; ids must still fit.
    Tensor narrow({onehot.rows(), n_phonemes});
    for (std::size_t t = 0; t < seq.size(); ++t) {
      if (static_cast<std::size_t>(seq.ids[t]) >= n_phonemes)
        throw ValueError("encode_text: phoneme id outside model inventory");
      narrow(t, static_cast<std::size_t>(seq.ids[t])) = 1.0;
    }
    onehot = std::move(narrow);
  }
  Var x = p.text_w.tape()->constant(std::move(onehot));
  return add_row_bias(matmul(x, p.text_w), p.text_b);
}

PatternVars pattern_extract(Var text_embedding, Var audio_embedding) {
  const Tensor& et = text_embedding.value();
  const Tensor& ea = audio_embedding.value();
  if (et.empty() || ea.empty()) throw ValueError("pattern_extract: empty embedding");
  if (et.rank() != 2 || ea.rank() != 2 || et.cols() != ea.cols())
    throw ShapeError("pattern_extract: embedding widths differ " + shape_str(et.shape()) + " vs " +
                     shape_str(ea.shape()));
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(et.cols()));
  Var affinity = softmax_rows(scale(matmul_bt(text_embedding, audio_embedding), inv_sqrt_dk));
  return {affinity, matmul(affinity, audio_embedding)};
}

Var discriminate_logit(Var attention, const ParamVars& p) {
  if (attention.value().empty()) throw ValueError("discriminate: empty input");
  Var h = gru(attention, p.disc_wx, p.disc_wh, p.disc_b, p.zero_state);
  return add_row_bias(matmul(last_row(h), p.out_w), p.out_b);
}

ForwardVars forward_graph(Tape& tape, const ParamVars& p, const Tensor& features,
                          const PhonemeSequence& seq) {
  ForwardVars out;
  out.audio_embedding = encode_audio(tape.constant(features), p);
  out.text_embedding = encode_text(seq, p);
  const PatternVars pat = pattern_extract(out.text_embedding, out.audio_embedding);
  out.affinity = pat.affinity;
  out.attention = pat.attention;
  out.logit = discriminate_logit(pat.attention, p);
  return out;
}

namespace {

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor encode_audio(const Tensor& features, const ModelParams& params) {
  if (features.empty()) throw ValueError("encode_audio: empty features");
  Tape tape;
  const ParamVars p = ParamVars::bind(tape, params, false);
  return encode_audio(tape.constant(features), p).value();
}

Tensor encode_text(const PhonemeSequence& seq, const ModelParams& params) {
  Tape tape;
  const ParamVars p = ParamVars::bind(tape, params, false);
  return encode_text(seq, p).value();
}

std::pair<Tensor, Tensor> pattern_extract(const Tensor& text_embedding,
                                          const Tensor& audio_embedding) {
  if (text_embedding.empty() || audio_embedding.empty())
    throw ValueError("pattern_extract: empty embedding");
  Tape tape;
  const PatternVars pat =
      pattern_extract(tape.constant(text_embedding), tape.constant(audio_embedding));
  return {pat.affinity.value(), pat.attention.value()};
}

double discriminate(const Tensor& attention, const ModelParams& params) {
  if (attention.empty()) throw ValueError("discriminate: empty input");
  Tape tape;
  const ParamVars p = ParamVars::bind(tape, params, false);
  return sigmoid_value(discriminate_logit(tape.constant(attention), p).value().item());
}

ForwardOutput forward(const Tensor& features, const PhonemeSequence& seq,
                      const ModelParams& params) {
  Tape tape;
  const ParamVars p = ParamVars::bind(tape, params, false);
  const ForwardVars f = forward_graph(tape, p, features, seq);
  ForwardOutput out;
  out.logit = f.logit.value().item();
  out.prob = sigmoid_value(out.logit);
  out.affinity = f.affinity.value();
  out.audio_embedding = f.audio_embedding.value();
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

std::uint64_t get_u64(std::istream& is, const std::string& name) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError(name + ": truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u64(out, kCheckpointVersion);
  const ModelDims& d = params.dims;
  for (std::size_t v : {d.n_mels, d.conv_channels, d.embed, d.n_phonemes, d.kernel}) put_u64(out, v);
  const auto named = params.named();
  put_u64(out, named.size());
  for (const auto& [name, t] : named) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, t->rank());
    for (std::size_t s : t->shape()) put_u64(out, s);
    for (double v : t->data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint not found: " + name);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IoError(name + ": not a checkpoint file");
  const auto version = get_u64(in, name);
  if (version != kCheckpointVersion)
    throw IoError(name + ": unsupported checkpoint version " + std::to_string(version));
  ModelDims d;
  d.n_mels = get_u64(in, name);
  d.conv_channels = get_u64(in, name);
  d.embed = get_u64(in, name);
  d.n_phonemes = get_u64(in, name);
  d.kernel = get_u64(in, name);
  ModelParams params = ModelParams::zeros(d);
  auto named = params.named();
  if (get_u64(in, name) != named.size()) throw IoError(name + ": unexpected tensor count");
  for (auto& [expected, t] : named) {
    const auto len = get_u64(in, name);
    if (len > 64) throw IoError(name + ": corrupt tensor name");
    std::string tname(len, '\0');
    if (!in.read(tname.data(), static_cast<std::streamsize>(len))) throw IoError(name + ": truncated checkpoint");
    if (tname != expected) throw IoError(name + ": expected tensor " + std::string(expected) + ", found " + tname);
    const auto rank = get_u64(in, name);
    Shape shape;
    for (std::uint64_t i = 0; i < rank && i < 8; ++i) shape.push_back(get_u64(in, name));
    if (shape != t->shape()) throw IoError(name + ": shape mismatch for " + tname);
    for (double& v : t->data()) v = std::bit_cast<double>(get_u64(in, name));
  }
  return params;
}

}  // namespace cmcd
