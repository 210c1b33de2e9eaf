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

#include "cmcd/autodiff.h"

#include <algorithm>
#include <cmath>
#include <memory>

#include "cmcd/error.h"

namespace cmcd {

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(*this); }
const Tensor& Var::grad() const { return tape_->grad(*this); }

void Tape::check_owner(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw ValueError("variable does not belong to this tape");
  }
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (value.empty()) throw ValueError("empty tensor on tape");
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return make_var(nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw ValueError("operation produced a non-finite value");
  Node node;
  node.value = std::move(value);
  for (Var in : inputs) {
    check_owner(in);
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return make_var(nodes_.size() - 1);
}

const Tensor& Tape::grad(Var v) const {
  check_owner(v);
  const Node& node = nodes_[v.id()];
  if (node.grad.empty()) throw ValueError("gradient requested before backward()");
  return node.grad;
}

Tensor* Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return &node.grad;
}

void Tape::backward(Var loss) {
  check_owner(loss);
  if (value(loss).size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     shape_str(value(loss).shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor();
  if (Tensor* seed = grad_buffer(loss.id())) (*seed)[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward && !node.grad.empty()) node.backward(*this, i);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) grad_buffer(i);
}

// ---------------------------------------------------------------------------
// Dense kernels. All accumulate into c.

namespace {

// c[p,r] += a[p,q] * b[q,r]
void gemm_nn(const double* a, const double* b, double* c, std::size_t p, std::size_t q,
             std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    double* ci = c + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double av = a[i * q + k];
      if (av == 0.0) continue;
      const double* bk = b + k * r;
      for (std::size_t j = 0; j < r; ++j) ci[j] += av * bk[j];
    }
  }
}

// c[p,r] += a[p,q] * b[r,q]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t p, std::size_t q,
             std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    const double* ai = a + i * q;
    for (std::size_t j = 0; j < r; ++j) {
      const double* bj = b + j * q;
      double acc = 0.0;
      for (std::size_t k = 0; k < q; ++k) acc += ai[k] * bj[k];
      c[i * r + j] += acc;
    }
  }
}

// c[q,r] += a[p,q]^T * b[p,r]
void gemm_tn(const double* a, const double* b, double* c, std::size_t p, std::size_t q,
             std::size_t r) {
  for (std::size_t k = 0; k < p; ++k) {
    const double* ak = a + k * q;
    const double* bk = b + k * r;
    for (std::size_t i = 0; i < q; ++i) {
      const double av = ak[i];
      if (av == 0.0) continue;
      double* ci = c + i * r;
      for (std::size_t j = 0; j < r; ++j) ci[j] += av * bk[j];
    }
  }
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + " expects a matrix, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Elementwise unary op whose derivative is expressed through its output.
template <typename Fwd, typename DerivFromOut>
Var unary(Var a, Fwd fwd, DerivFromOut deriv) {
  Tape& tape = *a.tape();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const Var inputs[] = {a};
  return tape.record(std::move(y), inputs, [deriv](Tape& t, std::size_t self) {
    const std::size_t in = t.inputs(self)[0];
    Tensor* gx = t.grad_buffer(in);
    if (!gx) return;
    const Tensor& gy = t.output_grad(self);
    const Tensor& y = t.value(self);
    const Tensor& x = t.value(in);
    for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tensor c({a.rows(), b.cols()});
  gemm_nn(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
  return c;
}

Tensor softmax_rows(const Tensor& m) {
  require_matrix(m, "softmax_rows");
  Tensor out(m.shape());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (double& v : o) v /= total;
  }
  return out;
}

Var matmul(Var a, Var b) {
  Tensor c = matmul(a.value(), b.value());
  const Var inputs[] = {a, b};
  return a.tape()->record(std::move(c), inputs, [](Tape& t, std::size_t self) {
    const auto& in = t.inputs(self);
    const Tensor& av = t.value(in[0]);
    const Tensor& bv = t.value(in[1]);
    const Tensor& g = t.output_grad(self);
    const std::size_t p = av.rows(), q = av.cols(), r = bv.cols();
    if (Tensor* ga = t.grad_buffer(in[0]))
      gemm_nt(g.data().data(), bv.data().data(), ga->data().data(), p, r, q);
    if (Tensor* gb = t.grad_buffer(in[1]))
      gemm_tn(av.data().data(), g.data().data(), gb->data().data(), p, q, r);
  });
}

Var matmul_bt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul_bt");
  require_matrix(bv, "matmul_bt");
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_bt: inner dimensions differ " + shape_str(av.shape()) + " x " +
                     shape_str(bv.shape()) + "^T");
  }
  Tensor c({av.rows(), bv.rows()});
  gemm_nt(av.data().data(), bv.data().data(), c.data().data(), av.rows(), av.cols(), bv.rows());
  const Var inputs[] = {a, b};
  return a.tape()->record(std::move(c), inputs, [](Tape& t, std::size_t self) {
    const auto& in = t.inputs(self);
    const Tensor& av = t.value(in[0]);
    const Tensor& bv = t.value(in[1]);
    const Tensor& g = t.output_grad(self);
    const std::size_t p = av.rows(), q = av.cols(), r = bv.rows();
    if (Tensor* ga = t.grad_buffer(in[0]))
      gemm_nn(g.data().data(), bv.data().data(), ga->data().data(), p, r, q);
    if (Tensor* gb = t.grad_buffer(in[1]))
      gemm_tn(g.data().data(), av.data().data(), gb->data().data(), p, r, q);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b.value()[i];
  const Var inputs[] = {a, b};
  return a.tape()->record(std::move(c), inputs, [](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    for (std::size_t in : t.inputs(self))
      if (Tensor* gi = t.grad_buffer(in))
        for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b.value()[i];
  const Var inputs[] = {a, b};
  return a.tape()->record(std::move(c), inputs, [](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    const auto& in = t.inputs(self);
    if (Tensor* ga = t.grad_buffer(in[0]))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = t.grad_buffer(in[1]))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b.value()[i];
  const Var inputs[] = {a, b};
  return a.tape()->record(std::move(c), inputs, [](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    const auto& in = t.inputs(self);
    const Tensor& av = t.value(in[0]);
    const Tensor& bv = t.value(in[1]);
    if (Tensor* ga = t.grad_buffer(in[0]))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    if (Tensor* gb = t.grad_buffer(in[1]))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_row_bias(Var m, Var bias) {
  const Tensor& mv = m.value();
  const Tensor& bv = bias.value();
  require_matrix(mv, "add_row_bias");
  if (bv.rank() != 1 || bv.size() != mv.cols()) {
    throw ShapeError("add_row_bias: bias " + shape_str(bv.shape()) + " does not fit " +
                     shape_str(mv.shape()));
  }
  Tensor c = mv;
  for (std::size_t r = 0; r < c.rows(); ++r)
    for (std::size_t j = 0; j < c.cols(); ++j) c(r, j) += bv[j];
  const Var inputs[] = {m, bias};
  return m.tape()->record(std::move(c), inputs, [](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    const auto& in = t.inputs(self);
    if (Tensor* gm = t.grad_buffer(in[0]))
      for (std::size_t i = 0; i < g.size(); ++i) (*gm)[i] += g[i];
    if (Tensor* gb = t.grad_buffer(in[1]))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gb)[j] += g(r, j);
  });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const Var inputs[] = {a};
  return a.tape()->record(Tensor::scalar(total), inputs, [](Tape& t, std::size_t self) {
    const double g = t.output_grad(self)[0];
    if (Tensor* ga = t.grad_buffer(t.inputs(self)[0]))
      for (double& v : ga->data()) v += g;
  });
}

Var softmax_rows(Var m) {
  Tensor y = softmax_rows(m.value());
  const Var inputs[] = {m};
  return m.tape()->record(std::move(y), inputs, [](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_buffer(t.inputs(self)[0]);
    if (!gx) return;
    const Tensor& g = t.output_grad(self);
    const Tensor& y = t.value(self);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) (*gx)(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var last_row(Var m) {
  const Tensor& mv = m.value();
  require_matrix(mv, "last_row");
  const std::size_t last = mv.rows() - 1;
  Tensor out({1, mv.cols()});
  std::copy(mv.row(last).begin(), mv.row(last).end(), out.data().begin());
  const Var inputs[] = {m};
  return m.tape()->record(std::move(out), inputs, [last](Tape& t, std::size_t self) {
    Tensor* gm = t.grad_buffer(t.inputs(self)[0]);
    if (!gm) return;
    const Tensor& g = t.output_grad(self);
    auto row = gm->row(last);
    for (std::size_t j = 0; j < g.size(); ++j) row[j] += g[j];
  });
}

Var mse(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mse");
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    total += d * d;
  }
  const double n = static_cast<double>(av.size());
  const Var inputs[] = {a, b};
  return a.tape()->record(Tensor::scalar(total / n), inputs, [n](Tape& t, std::size_t self) {
    const double g = t.output_grad(self)[0];
    const auto& in = t.inputs(self);
    const Tensor& av = t.value(in[0]);
    const Tensor& bv = t.value(in[1]);
    Tensor* ga = t.grad_buffer(in[0]);
    Tensor* gb = t.grad_buffer(in[1]);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = 2.0 * g * (av[i] - bv[i]) / n;
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
}

// ---------------------------------------------------------------------------
// conv1d

Var conv1d(Var input, Var kernels, std::size_t stride) {
  const Tensor& x = input.value();
  const Tensor& w = kernels.value();
  if (x.empty()) throw ValueError("conv1d: empty input");
  require_matrix(x, "conv1d");
  if (w.rank() != 3 || w.dim(1) != x.cols()) {
    throw ShapeError("conv1d: kernels " + shape_str(w.shape()) + " do not fit input " +
                     shape_str(x.shape()));
  }
  if (stride < 1) throw ValueError("conv1d: stride must be >= 1");
  const std::size_t c_out = w.dim(0), c_in = w.dim(1), k = w.dim(2);
  if (k % 2 == 0) throw ValueError("conv1d: kernel size must be odd");
  const std::size_t t_in = x.rows();
  const std::size_t t_out = (t_in + stride - 1) / stride;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);

  // Tap-major layout [k][c_in][c_out] keeps the inner loop contiguous.
  auto packed = std::make_shared<std::vector<double>>(k * c_in * c_out);
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t c = 0; c < c_in; ++c)
      for (std::size_t j = 0; j < k; ++j) (*packed)[(j * c_in + c) * c_out + o] = w[(o * c_in + c) * k + j];

  Tensor y({t_out, c_out});
  for (std::size_t t = 0; t < t_out; ++t) {
    double* yt = &y(t, 0);
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + j) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
      auto xr = x.row(static_cast<std::size_t>(src));
      for (std::size_t c = 0; c < c_in; ++c) {
        const double xv = xr[c];
        if (xv == 0.0) continue;
        const double* wp = packed->data() + (j * c_in + c) * c_out;
        for (std::size_t o = 0; o < c_out; ++o) yt[o] += xv * wp[o];
      }
    }
  }

  const Var inputs[] = {input, kernels};
  return input.tape()->record(
      std::move(y), inputs,
      [packed, stride, pad, c_in, c_out, k, t_in, t_out](Tape& t, std::size_t self) {
        const auto& in = t.inputs(self);
        const Tensor& x = t.value(in[0]);
        const Tensor& g = t.output_grad(self);
        Tensor* gx = t.grad_buffer(in[0]);
        Tensor* gw = t.grad_buffer(in[1]);
        std::vector<double> gpacked(gw ? packed->size() : 0, 0.0);
        for (std::size_t tt = 0; tt < t_out; ++tt) {
          const double* gt = g.row(tt).data();
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(tt * stride + j) - pad;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
            const auto s = static_cast<std::size_t>(src);
            for (std::size_t c = 0; c < c_in; ++c) {
              const std::size_t base = (j * c_in + c) * c_out;
              if (gx) {
                const double* wp = packed->data() + base;
                double acc = 0.0;
                for (std::size_t o = 0; o < c_out; ++o) acc += wp[o] * gt[o];
                (*gx)(s, c) += acc;
              }
              if (gw) {
                const double xv = x(s, c);
                if (xv == 0.0) continue;
                double* gp = gpacked.data() + base;
                for (std::size_t o = 0; o < c_out; ++o) gp[o] += xv * gt[o];
              }
            }
          }
        }
        if (gw) {
          for (std::size_t o = 0; o < c_out; ++o)
            for (std::size_t c = 0; c < c_in; ++c)
              for (std::size_t j = 0; j < k; ++j)
                (*gw)[(o * c_in + c) * k + j] += gpacked[(j * c_in + c) * c_out + o];
        }
      });
}

// ---------------------------------------------------------------------------
// GRU

namespace {

struct GruCache {
  std::size_t steps = 0, hidden = 0;
  std::vector<double> z, r, cand, reset_h;  // each [T, H]
};

}  // namespace

Var gru(Var inputs, Var w_input, Var w_hidden, Var bias, Var h0) {
  const Tensor& x = inputs.value();
  const Tensor& wx = w_input.value();
  const Tensor& wh = w_hidden.value();
  const Tensor& b = bias.value();
  const Tensor& hinit = h0.value();
  if (x.empty()) throw ValueError("gru: empty input");
  require_matrix(x, "gru");
  require_matrix(wx, "gru input weights");
  require_matrix(wh, "gru hidden weights");
  const std::size_t steps = x.rows(), hidden = wh.rows(), h3 = 3 * hidden;
  if (wx.rows() != x.cols() || wx.cols() != h3 || wh.cols() != h3 || b.rank() != 1 ||
      b.size() != h3 || hinit.rank() != 1 || hinit.size() != hidden) {
    throw ShapeError("gru: inconsistent shapes x" + shape_str(x.shape()) + " Wx" +
                     shape_str(wx.shape()) + " Wh" + shape_str(wh.shape()) + " b" +
                     shape_str(b.shape()) + " h0" + shape_str(hinit.shape()));
  }

  // Input projections for all steps at once.
  std::vector<double> xw(steps * h3);
  for (std::size_t t = 0; t < steps; ++t) std::copy(b.data().begin(), b.data().end(), xw.begin() + t * h3);
  gemm_nn(x.data().data(), wx.data().data(), xw.data(), steps, x.cols(), h3);

  auto cache = std::make_shared<GruCache>();
  cache->steps = steps;
  cache->hidden = hidden;
  cache->z.resize(steps * hidden);
  cache->r.resize(steps * hidden);
  cache->cand.resize(steps * hidden);
  cache->reset_h.resize(steps * hidden);

  Tensor out({steps, hidden});
  std::vector<double> acc(h3);
  const double* whp = wh.data().data();
  for (std::size_t t = 0; t < steps; ++t) {
    const double* hprev = t ? &out(t - 1, 0) : hinit.data().data();
    const double* xt = xw.data() + t * h3;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < hidden; ++k) {
      const double hv = hprev[k];
      if (hv == 0.0) continue;
      const double* wrow = whp + k * h3;
      for (std::size_t j = 0; j < 2 * hidden; ++j) acc[j] += hv * wrow[j];
    }
    double* z = cache->z.data() + t * hidden;
    double* r = cache->r.data() + t * hidden;
    double* rh = cache->reset_h.data() + t * hidden;
    for (std::size_t j = 0; j < hidden; ++j) {
      z[j] = sigmoid_scalar(xt[j] + acc[j]);
      r[j] = sigmoid_scalar(xt[hidden + j] + acc[hidden + j]);
      rh[j] = r[j] * hprev[j];
    }
    for (std::size_t k = 0; k < hidden; ++k) {
      const double rv = rh[k];
      if (rv == 0.0) continue;
      const double* wrow = whp + k * h3 + 2 * hidden;
      for (std::size_t j = 0; j < hidden; ++j) acc[2 * hidden + j] += rv * wrow[j];
    }
    double* c = cache->cand.data() + t * hidden;
    double* h = &out(t, 0);
    for (std::size_t j = 0; j < hidden; ++j) {
      c[j] = std::tanh(xt[2 * hidden + j] + acc[2 * hidden + j]);
      h[j] = (1.0 - z[j]) * hprev[j] + z[j] * c[j];
    }
  }

  const Var ins[] = {inputs, w_input, w_hidden, bias, h0};
  return inputs.tape()->record(std::move(out), ins, [cache](Tape& t, std::size_t self) {
    const auto& in = t.inputs(self);
    const Tensor& x = t.value(in[0]);
    const Tensor& wx = t.value(in[1]);
    const Tensor& wh = t.value(in[2]);
    const Tensor& hinit = t.value(in[4]);
    const Tensor& hs = t.value(self);
    const Tensor& g = t.output_grad(self);
    Tensor* gx = t.grad_buffer(in[0]);
    Tensor* gwx = t.grad_buffer(in[1]);
    Tensor* gwh = t.grad_buffer(in[2]);
    Tensor* gb = t.grad_buffer(in[3]);
    Tensor* gh0 = t.grad_buffer(in[4]);

    const std::size_t steps = cache->steps, hidden = cache->hidden, h3 = 3 * hidden;
    const double* whp = wh.data().data();
    std::vector<double> dxw(steps * h3, 0.0);
    std::vector<double> dh(hidden), dh_next(hidden, 0.0), dh_prev(hidden), d_rh(hidden);
    for (std::size_t tt = steps; tt-- > 0;) {
      const double* hprev = tt ? hs.row(tt - 1).data() : hinit.data().data();
      const double* z = cache->z.data() + tt * hidden;
      const double* r = cache->r.data() + tt * hidden;
      const double* c = cache->cand.data() + tt * hidden;
      const double* rh = cache->reset_h.data() + tt * hidden;
      double* da = dxw.data() + tt * h3;  // pre-activation grads [z | r | c]
      for (std::size_t j = 0; j < hidden; ++j) {
        dh[j] = g(tt, j) + dh_next[j];
        const double dz = dh[j] * (c[j] - hprev[j]);
        const double dc = dh[j] * z[j];
        dh_prev[j] = dh[j] * (1.0 - z[j]);
        da[j] = dz * z[j] * (1.0 - z[j]);
        da[2 * hidden + j] = dc * (1.0 - c[j] * c[j]);
      }
      // Candidate path through the reset-gated hidden state.
      for (std::size_t k = 0; k < hidden; ++k) {
        const double* wrow = whp + k * h3 + 2 * hidden;
        double acc = 0.0;
        for (std::size_t j = 0; j < hidden; ++j) acc += wrow[j] * da[2 * hidden + j];
        d_rh[k] = acc;
      }
      for (std::size_t k = 0; k < hidden; ++k) {
        const double dr = d_rh[k] * hprev[k];
        dh_prev[k] += d_rh[k] * r[k];
        da[hidden + k] = dr * r[k] * (1.0 - r[k]);
      }
      // Gate paths through the previous hidden state.
      for (std::size_t k = 0; k < hidden; ++k) {
        const double* wrow = whp + k * h3;
        double acc = 0.0;
        for (std::size_t j = 0; j < 2 * hidden; ++j) acc += wrow[j] * da[j];
        dh_prev[k] += acc;
      }
      if (gwh) {
        for (std::size_t k = 0; k < hidden; ++k) {
          double* grow = gwh->data().data() + k * h3;
          const double hv = hprev[k];
          if (hv != 0.0)
            for (std::size_t j = 0; j < 2 * hidden; ++j) grow[j] += hv * da[j];
          const double rv = rh[k];
          if (rv != 0.0)
            for (std::size_t j = 0; j < hidden; ++j) grow[2 * hidden + j] += rv * da[2 * hidden + j];
        }
      }
      dh_next.swap(dh_prev);
    }
    if (gx) gemm_nt(dxw.data(), wx.data().data(), gx->data().data(), steps, h3, x.cols());
    if (gwx) gemm_tn(x.data().data(), dxw.data(), gwx->data().data(), steps, x.cols(), h3);
    if (gb)
      for (std::size_t tt = 0; tt < steps; ++tt)
        for (std::size_t j = 0; j < h3; ++j) (*gb)[j] += dxw[tt * h3 + j];
    if (gh0)
      for (std::size_t j = 0; j < hidden; ++j) (*gh0)[j] += dh_next[j];
  });
}

// ---------------------------------------------------------------------------
// Gradient verification

namespace {

double evaluate(const ScalarFunction& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.leaf(p, false));
  const Var loss = f(tape, vars);
  return tape.value(loss).item();
}

}  // namespace

std::vector<Tensor> analytic_gradients(const ScalarFunction& f,
                                       const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.leaf(p, true));
  const Var loss = f(tape, vars);
  tape.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(vars.size());
  for (Var v : vars) grads.push_back(tape.grad(v));
  return grads;
}

double gradient_error(const ScalarFunction& f, const std::vector<Tensor>& params,
                      const std::vector<Tensor>& analytic, double eps) {
  if (!(eps > 0)) throw ValueError("finite difference step must be positive");
  if (analytic.size() != params.size()) throw ShapeError("gradient count mismatch");
  std::vector<Tensor> probe = params;
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (analytic[p].shape() != params[p].shape()) throw ShapeError("gradient shape mismatch");
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double orig = params[p][i];
      probe[p][i] = orig + eps;
      const double up = evaluate(f, probe);
      probe[p][i] = orig - eps;
      const double down = evaluate(f, probe);
      probe[p][i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[p][i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_diff_check(const ScalarFunction& f, const std::vector<Tensor>& params,
                         double eps) {
  if (!(eps > 0)) throw ValueError("finite difference step must be positive");
  return gradient_error(f, params, analytic_gradients(f, params), eps);
}

}  // namespace cmcd
