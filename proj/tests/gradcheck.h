// Copyright 2026 The Focusvec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Finite-difference gradient checking shared by the unit and acceptance tests.

#ifndef FOCUSVEC_TESTS_GRADCHECK_H_
#define FOCUSVEC_TESTS_GRADCHECK_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "focusvec/random.h"
#include "focusvec/tensor.h"

namespace focusvec::testing {

using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCase {
  std::string name;
  std::vector<Tensor> inputs;
  GraphFn build;
};

inline Tensor RandomTensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = lo + (hi - lo) * rng.Uniform();
  return t;
}

// Values bounded away from zero, for inputs that pass through kinks.
inline Tensor RandomAwayFromZero(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    const double m = 0.1 + 0.9 * rng.Uniform();
    v = rng.Uniform() < 0.5 ? -m : m;
  }
  return t;
}

// Reduces any output to a scalar through a fixed random projection so that
// every output element contributes a distinct weight.
inline double EvaluateScalar(const GraphFn& build, const std::vector<Tensor>& inputs,
                             const Tensor& projection, std::vector<Tensor>* grads) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.Input(t, grads != nullptr));
  Var out = build(tape, vars);
  Var loss = out.value().size() == 1 ? out : Sum(Mul(out, tape.Constant(projection)));
  if (grads != nullptr) {
    tape.Backward(loss);
    grads->clear();
    for (const Var& v : vars) grads->push_back(tape.Grad(v));
  }
  return loss.value().item();
}

// Five-point central differences; truncation error is O(h^4), so a larger
// step keeps roundoff small.
inline Tensor FivePointGrad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (int64_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    double fs[4];
    const double steps[4] = {2 * h, h, -h, -2 * h};
    for (int k = 0; k < 4; ++k) {
      probe[i] = x0 + steps[k];
      fs[k] = f(probe);
    }
    probe[i] = x0;
    grad[i] = (-fs[0] + 8 * fs[1] - 8 * fs[2] + fs[3]) / (12 * h);
  }
  return grad;
}

struct GradCheckResult {
  // Largest over inputs of |g - g_fd| / max(|g|, |g_fd|, floor), in 2-norm.
  double max_relative_error = 0.0;
  int64_t parameters = 0;
};

inline GradCheckResult CheckGradients(const GradCase& c, uint64_t seed = 7,
                                      double h = 1e-3) {
  Rng rng(seed);
  Tensor probe_shape;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : c.inputs) vars.push_back(tape.Input(t, false));
    probe_shape = c.build(tape, vars).value();
  }
  const Tensor projection = RandomTensor(rng, probe_shape.shape(), 0.5, 1.5);
  std::vector<Tensor> analytic;
  EvaluateScalar(c.build, c.inputs, projection, &analytic);
  GradCheckResult result;
  for (size_t k = 0; k < c.inputs.size(); ++k) {
    result.parameters += c.inputs[k].size();
    auto f = [&](const Tensor& x) {
      std::vector<Tensor> in = c.inputs;
      in[k] = x;
      return EvaluateScalar(c.build, in, projection, nullptr);
    };
    const Tensor numeric = FivePointGrad(f, c.inputs[k], h);
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (int64_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[k][i] - numeric[i]) * (analytic[k][i] - numeric[i]);
      na += analytic[k][i] * analytic[k][i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-6});
    result.max_relative_error = std::max(result.max_relative_error, std::sqrt(diff) / denom);
  }
  return result;
}

// One case per differentiable primitive.
inline std::vector<GradCase> PrimitiveCases() {
  Rng rng(2024);
  std::vector<GradCase> cases;
  auto r = [&rng](Shape s) { return RandomTensor(rng, std::move(s)); };
  cases.push_back({"MatMul", {r({3, 4}), r({4, 5})},
                   [](Tape&, const std::vector<Var>& v) { return MatMul(v[0], v[1]); }});
  cases.push_back({"MatMulTransposed", {r({3, 4}), r({5, 4})},
                   [](Tape&, const std::vector<Var>& v) {
                     return MatMulTransposed(v[0], v[1]);
                   }});
  cases.push_back({"Add", {r({3, 4}), r({3, 4})},
                   [](Tape&, const std::vector<Var>& v) { return Add(v[0], v[1]); }});
  cases.push_back({"AddSameInput", {r({2, 3})},
                   [](Tape&, const std::vector<Var>& v) { return Add(v[0], v[0]); }});
  cases.push_back({"AddBias", {r({3, 4}), r({4})},
                   [](Tape&, const std::vector<Var>& v) { return AddBias(v[0], v[1]); }});
  cases.push_back({"Mul", {r({3, 4}), r({3, 4})},
                   [](Tape&, const std::vector<Var>& v) { return Mul(v[0], v[1]); }});
  cases.push_back({"Scale", {r({3, 4})},
                   [](Tape&, const std::vector<Var>& v) { return Scale(v[0], -2.5); }});
  const Tensor offsets = r({4});
  cases.push_back({"AddConstant", {r({3, 4})},
                   [offsets](Tape&, const std::vector<Var>& v) {
                     return AddConstant(v[0], offsets);
                   }});
  cases.push_back({"ScaleBias", {r({3, 4}), r({4}), r({4})},
                   [](Tape&, const std::vector<Var>& v) {
                     return ScaleBias(v[0], v[1], v[2]);
                   }});
  cases.push_back({"MaskedScaleBias", {r({4, 3}), r({3}), r({3}), r({3}), r({3})},
                   [](Tape&, const std::vector<Var>& v) {
                     static const std::vector<uint8_t> mask = {1, 0, 0, 1};
                     return MaskedScaleBias(v[0], mask, v[1], v[2], v[3], v[4]);
                   }});
  cases.push_back({"Relu", {RandomAwayFromZero(rng, {3, 4})},
                   [](Tape&, const std::vector<Var>& v) { return Relu(v[0]); }});
  cases.push_back({"LayerNorm", {r({3, 5}), r({5}), r({5})},
                   [](Tape&, const std::vector<Var>& v) {
                     return LayerNorm(v[0], v[1], v[2]);
                   }});
  cases.push_back({"SoftmaxLastAxis", {r({3, 4})},
                   [](Tape&, const std::vector<Var>& v) { return Softmax(v[0]); }});
  cases.push_back({"SoftmaxMiddleAxis", {r({2, 3, 4})},
                   [](Tape&, const std::vector<Var>& v) { return Softmax(v[0], 1); }});
  cases.push_back({"MaskedSoftmax", {r({3, 3})},
                   [](Tape&, const std::vector<Var>& v) {
                     static const std::vector<uint8_t> keep = {1, 0, 0, 1, 1, 0, 1, 1, 1};
                     return MaskedSoftmax(v[0], keep);
                   }});
  cases.push_back({"LogSoftmax", {r({3, 4})},
                   [](Tape&, const std::vector<Var>& v) { return LogSoftmax(v[0]); }});
  cases.push_back({"NllLoss", {r({3, 4})},
                   [](Tape&, const std::vector<Var>& v) {
                     static const std::vector<int> targets = {1, 3, 0};
                     return NllLoss(LogSoftmax(v[0]), targets);
                   }});
  cases.push_back({"Gather", {r({5, 3})},
                   [](Tape&, const std::vector<Var>& v) {
                     static const std::vector<int> ids = {4, 0, 4, 2};
                     return Gather(v[0], ids);
                   }});
  cases.push_back({"SliceCols", {r({3, 6})},
                   [](Tape&, const std::vector<Var>& v) { return SliceCols(v[0], 1, 4); }});
  cases.push_back({"ConcatCols", {r({3, 2}), r({3, 3})},
                   [](Tape&, const std::vector<Var>& v) {
                     return ConcatCols({v[0], v[1], v[0]});
                   }});
  cases.push_back({"Sum", {r({3, 4})},
                   [](Tape&, const std::vector<Var>& v) { return Sum(v[0]); }});
  return cases;
}

// A random composite graph: a few inputs pushed through a random chain of
// primitives, ending in a scalar.
inline GradCase RandomCompositeCase(uint64_t seed) {
  Rng rng(seed);
  const int rows = 2 + rng.UniformInt(3);
  const int d = 2 + rng.UniformInt(5);
  const int depth = 3 + rng.UniformInt(5);
  std::vector<Tensor> inputs = {RandomTensor(rng, {rows, d})};
  std::vector<int> ops;
  std::vector<int> widths;
  int width = d;
  for (int s = 0; s < depth; ++s) {
    const int op = rng.UniformInt(9);
    ops.push_back(op);
    switch (op) {
      case 0: {  // matmul by a fresh weight
        const int next = 2 + rng.UniformInt(5);
        inputs.push_back(RandomTensor(rng, {width, next}));
        width = next;
        break;
      }
      case 1:  // bias
      case 5:  // elementwise product with a fresh tensor of the current shape
        inputs.push_back(op == 1 ? RandomTensor(rng, {width})
                                 : RandomTensor(rng, {rows, width}));
        break;
      case 3:  // layer norm
        inputs.push_back(RandomTensor(rng, {width}, 0.5, 1.5));
        inputs.push_back(RandomTensor(rng, {width}));
        break;
      case 7:  // masked scale-bias
        for (int k = 0; k < 4; ++k) inputs.push_back(RandomTensor(rng, {width}));
        break;
      case 8:  // attention against the original input
        inputs.push_back(RandomTensor(rng, {width, d}));
        break;
      default:
        break;
    }
    widths.push_back(width);
  }
  std::vector<int> targets;
  for (int i = 0; i < rows; ++i) targets.push_back(rng.UniformInt(width));
  std::vector<uint8_t> mask;
  for (int i = 0; i < rows; ++i) mask.push_back(static_cast<uint8_t>(i % 2));
  const bool nll_end = rng.UniformInt(2) == 0;

  GraphFn build = [ops, targets, mask, nll_end](Tape&, const std::vector<Var>& v) {
    Var x = v[0];
    size_t next = 1;
    for (int op : ops) {
      switch (op) {
        case 0:
          x = MatMul(x, v[next++]);
          break;
        case 1:
          x = AddBias(x, v[next++]);
          break;
        case 2:
          x = Softmax(x);
          break;
        case 3:
          x = LayerNorm(x, v[next], v[next + 1]);
          next += 2;
          break;
        case 4:
          x = Scale(Add(x, Scale(x, 0.5)), 0.8);
          break;
        case 5:
          x = Mul(x, v[next++]);
          break;
        case 6:
          x = ConcatCols({SliceCols(x, 0, 1), SliceCols(x, 1, x.value().cols())});
          break;
        case 7:
          x = MaskedScaleBias(x, mask, v[next], v[next + 1], v[next + 2], v[next + 3]);
          next += 4;
          break;
        case 8: {
          Var proj = MatMul(x, v[next++]);
          Var weights = Softmax(MatMulTransposed(proj, v[0]));
          x = Add(x, MatMul(weights, x));
          break;
        }
      }
    }
    if (nll_end) return NllLoss(LogSoftmax(x), targets);
    return Sum(Mul(x, x));
  };
  return {"composite_" + std::to_string(seed), std::move(inputs), std::move(build)};
}

}  // namespace focusvec::testing

#endif  // FOCUSVEC_TESTS_GRADCHECK_H_
