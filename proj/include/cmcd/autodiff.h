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

#ifndef CMCD_AUTODIFF_H_
#define CMCD_AUTODIFF_H_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cmcd/tensor.h"

namespace cmcd {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Operations are appended in execution order, so the
// node list is already topologically sorted and backward() is a single
// reverse sweep. A tape is single-threaded; use one tape per example and
// reduce gradients explicitly.
class Tape {
 public:
  // Called during the reverse sweep with the tape and the output node id.
  // Implementations read output_grad(self) and add into input gradients
  // via grad_buffer().
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf node. Parameters pass requires_grad = true; data inputs false.
  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Records an operation output. The backward closure is dropped if no
  // input requires a gradient.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& value(Var v) const { return value(v.id()); }
  // Gradient of the last backward() target; zeros if never reached.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

  // Access for backward closures.
  const Tensor& output_grad(std::size_t self) const { return nodes_[self].grad; }
  // Lazily allocated gradient accumulator; nullptr when the node does not
  // require a gradient.
  Tensor* grad_buffer(std::size_t id);
  const std::vector<std::size_t>& inputs(std::size_t self) const { return nodes_[self].inputs; }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Throws
  // ShapeError for a non-scalar loss.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  Var make_var(std::size_t id) { return Var(this, id); }
  void check_owner(Var v) const;

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All inputs must live on the same tape.

Var matmul(Var a, Var b);     // [p,q] x [q,r] -> [p,r]
Var matmul_bt(Var a, Var b);  // [p,q] x [r,q]^T -> [p,r]
Var add(Var a, Var b);        // same shape
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var add_row_bias(Var m, Var bias);  // [p,q] + [q] broadcast over rows
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var sum(Var a);  // -> scalar
Var softmax_rows(Var m);
Var last_row(Var m);  // [p,q] -> [1,q]

// Mean of squared differences over all elements -> scalar.
Var mse(Var a, Var b);

// Cross-correlation of input [T, C_in] with kernels [C_out, C_in, k] using
// zero "same" padding of (k-1)/2 per side. Output [ceil(T/stride), C_out].
Var conv1d(Var input, Var kernels, std::size_t stride);

// Gated recurrent unit over inputs [T, C]. Weight layout (gate blocks are
// update | reset | candidate, each H wide):
//   w_input  [C, 3H], w_hidden [H, 3H], bias [3H], h0 [H]
//   z = sigmoid(x Wz + h Uz + bz)
//   r = sigmoid(x Wr + h Ur + br)
//   c = tanh(x Wc + (r * h) Uc + bc)
//   h' = (1 - z) * h + z * c
// Returns all hidden states [T, H].
Var gru(Var inputs, Var w_input, Var w_hidden, Var bias, Var h0);

// Plain (non-taped) kernels shared with reference code and tests.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& m);

// ---------------------------------------------------------------------------
// Gradient verification.

// Builds a scalar loss on the given tape from parameter leaves.
using ScalarFunction = std::function<Var(Tape&, std::span<const Var> params)>;

// Analytic gradients of f at params via one backward pass.
std::vector<Tensor> analytic_gradients(const ScalarFunction& f,
                                       const std::vector<Tensor>& params);

// max over all parameter elements of |analytic - numeric| / max(1, |numeric|)
// with central differences (f(x+eps) - f(x-eps)) / (2 eps). Throws
// ValueError if eps <= 0.
double gradient_error(const ScalarFunction& f, const std::vector<Tensor>& params,
                      const std::vector<Tensor>& analytic, double eps = 1e-5);

double finite_diff_check(const ScalarFunction& f, const std::vector<Tensor>& params,
                         double eps = 1e-5);

}  // namespace cmcd

#endif  // CMCD_AUTODIFF_H_
