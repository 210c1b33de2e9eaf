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

#include <cmath>
#include <fstream>
#include <random>

#include "cmcd/error.h"
#include "cmcd/model.h"
#include "doctest.h"
#include "test_util.h"

using namespace cmcd;
using cmcd::testing::random_tensor;

namespace {

ModelDims tiny() {
  ModelDims d;
  d.conv_channels = 6;
  d.embed = 8;
  return d;
}

void check_row_stochastic(const Tensor& a) {
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0;
    for (double v : a.row(r)) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

}  // namespace

TEST_CASE("init_params is seeded and Glorot bounded") {
  const ModelParams a = init_params(1), b = init_params(1), c = init_params(2);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (const auto& [name, t] : a.named()) {
    CAPTURE(name);
    const bool bias = name.ends_with("_b");
    double max_abs = 0;
    for (double v : t->data()) max_abs = std::max(max_abs, std::abs(v));
    if (bias) {
      CHECK(max_abs == 0.0);
    } else {
      CHECK(max_abs > 0.0);
      CHECK(max_abs <= glorot_limit(a.dims, name));
    }
  }
}

TEST_CASE("parameter shapes follow the dimensions") {
  const ModelParams p = init_params(3);
  CHECK(p.conv1_w.shape() == Shape{128, 40, 5});
  CHECK(p.conv2_w.shape() == Shape{128, 128, 5});
  CHECK(p.gru1_wx.shape() == Shape{128, 384});
  CHECK(p.gru2_wh.shape() == Shape{128, 384});
  CHECK(p.text_w.shape() == Shape{40, 128});
  CHECK(p.out_w.shape() == Shape{128, 1});
  CHECK(glorot_limit(p.dims, "conv1_w") == doctest::Approx(std::sqrt(6.0 / (40 * 5 + 128 * 5))));
  CHECK_THROWS_AS(glorot_limit(p.dims, "nope"), ValueError);
}

TEST_CASE("encode_audio output lengths") {
  const ModelParams p = init_params(4);
  std::mt19937_64 rng(1);
  CHECK(encode_audio(random_tensor({98, 40}, rng), p).shape() == Shape{49, 128});
  CHECK(encode_audio(random_tensor({97, 40}, rng), p).shape() == Shape{49, 128});
  CHECK_THROWS_AS(encode_audio(Tensor({0, 40}), p), ShapeError);
  CHECK_THROWS_AS(encode_audio(Tensor(), p), ValueError);
  CHECK_THROWS_AS(encode_audio(Tensor({5, 39}), p), ShapeError);
}

TEST_CASE("encoder halves the frame count exactly") {
  const ModelParams p = init_params(5, tiny());
  std::mt19937_64 rng(2);
  for (std::size_t t = 1; t <= 64; ++t) {
    CHECK(audio_frames_after_encoder(t) == (t + 1) / 2);
    CHECK(encode_audio(random_tensor({t, 40}, rng), p).rows() == (t + 1) / 2);
  }
}

TEST_CASE("encode_text") {
  ModelParams p = init_params(6);
  const PhonemeSequence five = parse_phonemes("F R EH N D");
  CHECK(encode_text(five, p).shape() == Shape{5, 128});
  const Tensor rep = encode_text(parse_phonemes("AA AA"), p);
  CHECK(std::equal(rep.row(0).begin(), rep.row(0).end(), rep.row(1).begin()));
  p.text_w.fill(0.0);
  CHECK(encode_text(five, p) == Tensor({5, 128}));
  CHECK_THROWS_AS(encode_text(PhonemeSequence{}, p), ValueError);
}

TEST_CASE("pattern_extract") {
  std::mt19937_64 rng(3);
  const Tensor ea = random_tensor({7, 128}, rng);
  const auto [a0, attn0] = pattern_extract(Tensor({3, 128}), ea);
  CHECK(a0.shape() == Shape{3, 7});
  CHECK(attn0.shape() == Shape{3, 128});
  for (double v : a0.data()) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-14));

  // Logits E_t E_a^T / sqrt(2) = [[0, ln 3], [ln 3, 0]].
  const double l3 = std::log(3.0) * std::sqrt(2.0);
  const auto [a, attn] = pattern_extract(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{0, l3}, {l3, 0}}));
  CHECK(a(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(a(0, 1) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(a(1, 0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(a(1, 1) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(attn(0, 0) == doctest::Approx(0.75 * l3));
  CHECK_THROWS_AS(pattern_extract(Tensor({2, 3}), Tensor({2, 4})), ShapeError);
}

TEST_CASE("discriminate") {
  const ModelParams zero = ModelParams::zeros({});
  std::mt19937_64 rng(4);
  CHECK(discriminate(random_tensor({4, 128}, rng), zero) == 0.5);
  const ModelParams p = init_params(7);
  for (int trial = 0; trial < 10; ++trial) {
    const double prob = discriminate(random_tensor({std::size_t(1 + trial % 4), 128}, rng, -3, 3), p);
    CHECK(prob > 0.0);
    CHECK(prob < 1.0);
  }
}

TEST_CASE("forward equals the composition of the stages") {
  const ModelParams p = init_params(8);
  std::mt19937_64 rng(5);
  const Tensor feats = random_tensor({30, 40}, rng, -10, 0);
  const PhonemeSequence seq = parse_phonemes("AY M IY N T UW");
  const ForwardOutput out = forward(feats, seq, p);
  const Tensor ea = encode_audio(feats, p);
  const auto [a, attn] = pattern_extract(encode_text(seq, p), ea);
  CHECK(out.audio_embedding == ea);
  CHECK(out.affinity == a);
  CHECK(out.prob == discriminate(attn, p));
  CHECK(out.prob == doctest::Approx(1.0 / (1.0 + std::exp(-out.logit))).epsilon(1e-14));
  check_row_stochastic(out.affinity);
  const ForwardOutput again = forward(feats, seq, p);
  CHECK(again.logit == out.logit);
  CHECK(again.affinity == out.affinity);
}

TEST_CASE("taped and value-level forward agree") {
  const ModelParams p = init_params(9, tiny());
  std::mt19937_64 rng(6);
  const Tensor feats = random_tensor({13, 40}, rng, -10, 0);
  const PhonemeSequence seq = parse_phonemes("B IY AH");
  Tape tape;
  const ForwardVars v = forward_graph(tape, ParamVars::bind(tape, p, false), feats, seq);
  const ForwardOutput o = forward(feats, seq, p);
  CHECK(v.affinity.value() == o.affinity);
  CHECK(v.logit.value().item() == o.logit);
}

TEST_CASE("affinity rows are stochastic for random inputs") {
  const ModelParams p = init_params(10, tiny());
  std::mt19937_64 rng(7);
  for (std::size_t t = 1; t <= 12; ++t) {
    const Tensor feats = random_tensor({t * 3, 40}, rng, -20, 5);
    check_row_stochastic(forward(feats, parse_phonemes("K AE T"), p).affinity);
  }
}

TEST_CASE("logit gradient through the whole network") {
  ModelDims dims = tiny();
  dims.conv_channels = 4;
  dims.embed = 4;
  const ModelParams p = init_params(11, dims);
  std::mt19937_64 rng(8);
  const Tensor feats = random_tensor({8, 40}, rng, -1, 1);
  const PhonemeSequence seq = parse_phonemes("AY M IY");
  std::vector<Tensor> flat;
  for (const auto& [name, t] : p.named()) flat.push_back(*t);
  const ScalarFunction f = [&](Tape& tape, std::span<const Var> v) {
    ModelParams q = ModelParams::zeros(dims);
    ParamVars pv = ParamVars::bind(tape, q, false);
    Var* slots[] = {&pv.conv1_w, &pv.conv1_b, &pv.conv2_w, &pv.conv2_b, &pv.gru1_wx, &pv.gru1_wh,
                    &pv.gru1_b,  &pv.gru2_wx, &pv.gru2_wh, &pv.gru2_b,  &pv.text_w,  &pv.text_b,
                    &pv.disc_wx, &pv.disc_wh, &pv.disc_b,  &pv.out_w,   &pv.out_b};
    REQUIRE(std::size(slots) == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) *slots[i] = v[i];
    return forward_graph(tape, pv, feats, seq).logit;
  };
  CHECK(finite_diff_check(f, flat) <= 1e-4);
}

TEST_CASE("checkpoint round trip is exact") {
  const auto dir = cmcd::testing::scratch_dir("model_ckpt");
  const ModelParams p = init_params(12, tiny());
  save_checkpoint(dir / "p.bin", p);
  CHECK(load_checkpoint(dir / "p.bin") == p);
  try {
    load_checkpoint(dir / "missing.bin");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("not found") != std::string::npos);
  }
  std::ofstream(dir / "junk.bin") << "garbage";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.bin"), IoError);
  // Truncation anywhere is detected.
  std::ifstream in(dir / "p.bin", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.bin"), IoError);
}
