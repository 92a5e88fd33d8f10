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

#include "focusvec/tensor.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>

#include <Eigen/Dense>

#include "focusvec/errors.h"

namespace focusvec {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

ConstMatMap AsMat(const Tensor& t) {
  return ConstMatMap(t.data().data(), t.rows(), t.cols());
}
MatMap AsMat(Tensor& t) { return MatMap(t.data().data(), t.rows(), t.cols()); }

void RequireSameTape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
}

void RequireRank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         ShapeToString(t.shape()));
  }
}

void RequireVectorOfLength(const Tensor& t, int64_t n, const char* op,
                           const char* what) {
  if (t.size() != n || t.rank() > 2 || (t.rank() == 2 && t.shape()[0] != 1)) {
    throw DimensionError(std::string(op) + ": " + what + " must be a vector of " +
                         std::to_string(n) + " elements, got shape " +
                         ShapeToString(t.shape()));
  }
}

void Accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (int64_t e : shape_) {
    if (e < 0) throw DimensionError("negative extent in " + ShapeToString(shape_));
  }
  data_.assign(NumElements(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  for (int64_t e : shape_) {
    if (e < 0) throw DimensionError("negative extent in " + ShapeToString(shape_));
  }
  if (static_cast<int64_t>(data_.size()) != NumElements(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + ShapeToString(shape_));
  }
}

Tensor Tensor::Scalar(double value) { return Tensor(Shape{1}, {value}); }

Tensor Tensor::Vector(std::vector<double> values) {
  const auto n = static_cast<int64_t>(values.size());
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const auto r = static_cast<int64_t>(rows.size());
  const int64_t c = r == 0 ? 0 : static_cast<int64_t>(rows.begin()->size());
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (static_cast<int64_t>(row.size()) != c) {
      throw DimensionError("ragged matrix literal");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

int64_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

int64_t Tensor::rows() const {
  const int64_t c = cols();
  return c == 0 ? 0 : size() / c;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on a tensor of shape " + ShapeToString(shape_));
  }
  return data_[0];
}

void Tensor::Fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::BitEqual(const Tensor& other) const {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

void CheckFinite(const Tensor& t, const std::string& what) {
  if (!t.AllFinite()) throw NumericFailure("non-finite value produced by " + what);
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::Leaf(const Tensor& tensor) {
  if (auto it = leaf_index_.find(&tensor); it != leaf_index_.end()) {
    return Var(this, it->second);
  }
  Node node;
  node.ref = &tensor;
  node.needs_grad = tensor.requires_grad();
  nodes_.push_back(std::move(node));
  const int id = size() - 1;
  leaf_index_.emplace(&tensor, id);
  return Var(this, id);
}

Var Tape::Input(Tensor tensor, bool requires_grad) {
  Node node;
  node.owned = std::move(tensor);
  node.needs_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, size() - 1);
}

Var Tape::Push(Tensor value, std::initializer_list<Var> parents,
               BackwardFn backward, const char* op) {
  return Push(std::move(value), std::vector<Var>(parents), std::move(backward), op);
}

Var Tape::Push(Tensor value, const std::vector<Var>& parents, BackwardFn backward,
               const char* op) {
  CheckFinite(value, op);
  Node node;
  node.owned = std::move(value);
  for (const Var& p : parents) {
    if (&p.tape() != this) {
      throw ContractError(std::string(op) + ": operand from another tape");
    }
    node.needs_grad = node.needs_grad || nodes_[p.id()].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, size() - 1);
}

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.ref != nullptr ? *n.ref : n.owned;
}

Tensor& Tape::GradBuffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() != value(id).size() || n.grad.shape() != value(id).shape()) {
    n.grad = Tensor(value(id).shape(), 0.0);
  }
  return n.grad;
}

const Tensor* Tape::GradIfAny(int id) const {
  const Node& n = nodes_[id];
  if (n.grad.shape().empty() && n.grad.empty()) return nullptr;
  return &n.grad;
}

void Tape::Backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss from another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        ShapeToString(loss.value().shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  GradBuffer(loss.id()).Fill(1.0);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || !n.backward || GradIfAny(id) == nullptr) continue;
    n.backward(*this);
  }
  for (Node& n : nodes_) {
    if (!n.grad.empty()) CheckFinite(n.grad, "backward");
  }
}

Tensor Tape::Grad(Var v) const {
  if (const Tensor* g = GradIfAny(v.id())) return *g;
  return Tensor(v.value().shape(), 0.0);
}

Tensor Tape::GradFor(const Tensor& tensor) const {
  auto it = leaf_index_.find(&tensor);
  if (it == leaf_index_.end()) return Tensor(tensor.shape(), 0.0);
  if (const Tensor* g = GradIfAny(it->second)) return *g;
  return Tensor(tensor.shape(), 0.0);
}

const Tensor* Tape::FindGrad(const Tensor& tensor) const {
  auto it = leaf_index_.find(&tensor);
  if (it == leaf_index_.end()) return nullptr;
  return GradIfAny(it->second);
}

bool Tape::HasLeaf(const Tensor& tensor) const {
  return leaf_index_.count(&tensor) > 0;
}

// ---------------------------------------------------------------------------
// Primitives

Var MatMul(Var a, Var b) {
  RequireSameTape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  RequireRank2(av, "matmul");
  RequireRank2(bv, "matmul");
  if (av.shape()[1] != bv.shape()[0]) {
    throw DimensionError("matmul: inner dimensions differ: " +
                         ShapeToString(av.shape()) + " x " + ShapeToString(bv.shape()));
  }
  Tensor out(Shape{av.shape()[0], bv.shape()[1]});
  AsMat(out).noalias() = AsMat(av) * AsMat(bv);
  const int ia = a.id(), ib = b.id();
  Tape& tape = a.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {a, b}, [ia, ib, io](Tape& t) {
    const auto g = AsMat(*t.GradIfAny(io));
    if (t.needs_grad(ia)) {
      AsMat(t.GradBuffer(ia)).noalias() += g * AsMat(t.value(ib)).transpose();
    }
    if (t.needs_grad(ib)) {
      AsMat(t.GradBuffer(ib)).noalias() += AsMat(t.value(ia)).transpose() * g;
    }
  }, "matmul");
}

Var MatMulTransposed(Var a, Var b) {
  RequireSameTape(a, b, "matmul_transposed");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  RequireRank2(av, "matmul_transposed");
  RequireRank2(bv, "matmul_transposed");
  if (av.shape()[1] != bv.shape()[1]) {
    throw DimensionError("matmul_transposed: inner dimensions differ: " +
                         ShapeToString(av.shape()) + " x " +
                         ShapeToString(bv.shape()) + "^T");
  }
  Tensor out(Shape{av.shape()[0], bv.shape()[0]});
  AsMat(out).noalias() = AsMat(av) * AsMat(bv).transpose();
  const int ia = a.id(), ib = b.id();
  Tape& tape = a.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {a, b}, [ia, ib, io](Tape& t) {
    const auto g = AsMat(*t.GradIfAny(io));
    if (t.needs_grad(ia)) {
      AsMat(t.GradBuffer(ia)).noalias() += g * AsMat(t.value(ib));
    }
    if (t.needs_grad(ib)) {
      AsMat(t.GradBuffer(ib)).noalias() += g.transpose() * AsMat(t.value(ia));
    }
  }, "matmul_transposed");
}

Var Add(Var a, Var b) {
  RequireSameTape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("add: shapes differ: " + ShapeToString(av.shape()) +
                         " vs " + ShapeToString(bv.shape()));
  }
  Tensor out = av;
  out.set_requires_grad(false);
  Accumulate(out, bv);
  const int ia = a.id(), ib = b.id();
  Tape& tape = a.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {a, b}, [ia, ib, io](Tape& t) {
    const Tensor& g = *t.GradIfAny(io);
    if (t.needs_grad(ia)) Accumulate(t.GradBuffer(ia), g);
    if (t.needs_grad(ib)) Accumulate(t.GradBuffer(ib), g);
  }, "add");
}

Var AddBias(Var a, Var bias) {
  RequireSameTape(a, bias, "add_bias");
  const Tensor& av = a.value();
  const int64_t rows = av.rows(), cols = av.cols();
  RequireVectorOfLength(bias.value(), cols, "add_bias", "bias");
  Tensor out(av.shape());
  {
    const auto x = av.data();
    const auto b = bias.value().data();
    auto o = out.data();
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t c = 0; c < cols; ++c) o[r * cols + c] = x[r * cols + c] + b[c];
    }
  }
  const int ia = a.id(), ib = bias.id();
  Tape& tape = a.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {a, bias}, [ia, ib, io, rows, cols](Tape& t) {
    const Tensor& g = *t.GradIfAny(io);
    if (t.needs_grad(ia)) Accumulate(t.GradBuffer(ia), g);
    if (t.needs_grad(ib)) {
      auto db = t.GradBuffer(ib).data();
      const auto gd = g.data();
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) db[c] += gd[r * cols + c];
      }
    }
  }, "add_bias");
}

Var Mul(Var a, Var b) {
  RequireSameTape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("mul: shapes differ: " + ShapeToString(av.shape()) +
                         " vs " + ShapeToString(bv.shape()));
  }
  Tensor out(av.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const int ia = a.id(), ib = b.id();
  Tape& tape = a.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {a, b}, [ia, ib, io](Tape& t) {
    const Tensor& g = *t.GradIfAny(io);
    if (t.needs_grad(ia)) {
      Tensor& d = t.GradBuffer(ia);
      const Tensor& other = t.value(ib);
      for (int64_t i = 0; i < d.size(); ++i) d[i] += g[i] * other[i];
    }
    if (t.needs_grad(ib)) {
      Tensor& d = t.GradBuffer(ib);
      const Tensor& other = t.value(ia);
      for (int64_t i = 0; i < d.size(); ++i) d[i] += g[i] * other[i];
    }
  }, "mul");
}

Var Scale(Var a, double factor) {
  Tensor out(a.value().shape());
  const Tensor& av = a.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  const int ia = a.id();
  Tape& tape = a.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {a}, [ia, io, factor](Tape& t) {
    const Tensor& g = *t.GradIfAny(io);
    Tensor& d = t.GradBuffer(ia);
    for (int64_t i = 0; i < d.size(); ++i) d[i] += g[i] * factor;
  }, "scale");
}

Var AddConstant(Var a, const Tensor& c) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  if (c.size() == av.size()) {
    for (int64_t i = 0; i < out.size(); ++i) out[i] = av[i] + c[i];
  } else if (c.size() == av.cols()) {
    const int64_t cols = av.cols();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = av[i] + c[i % cols];
  } else {
    throw DimensionError("add_constant: cannot broadcast " +
                         ShapeToString(c.shape()) + " onto " +
                         ShapeToString(av.shape()));
  }
  const int ia = a.id();
  Tape& tape = a.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {a}, [ia, io](Tape& t) {
    Accumulate(t.GradBuffer(ia), *t.GradIfAny(io));
  }, "add_constant");
}

Var ScaleBias(Var h, Var scale, Var bias) {
  RequireSameTape(h, scale, "scale_bias");
  RequireSameTape(h, bias, "scale_bias");
  const Tensor& hv = h.value();
  const int64_t rows = hv.rows(), cols = hv.cols();
  RequireVectorOfLength(scale.value(), cols, "scale_bias", "scale");
  RequireVectorOfLength(bias.value(), cols, "scale_bias", "bias");
  Tensor out(hv.shape());
  {
    const auto s = scale.value().data();
    const auto b = bias.value().data();
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t c = 0; c < cols; ++c) {
        out[r * cols + c] = hv[r * cols + c] * s[c] + b[c];
      }
    }
  }
  const int ih = h.id(), is = scale.id(), ib = bias.id();
  Tape& tape = h.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {h, scale, bias},
                   [ih, is, ib, io, rows, cols](Tape& t) {
    const Tensor& g = *t.GradIfAny(io);
    if (t.needs_grad(ih)) {
      Tensor& d = t.GradBuffer(ih);
      const Tensor& s = t.value(is);
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) d[r * cols + c] += g[r * cols + c] * s[c];
      }
    }
    if (t.needs_grad(is)) {
      Tensor& d = t.GradBuffer(is);
      const Tensor& x = t.value(ih);
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) d[c] += g[r * cols + c] * x[r * cols + c];
      }
    }
    if (t.needs_grad(ib)) {
      Tensor& d = t.GradBuffer(ib);
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) d[c] += g[r * cols + c];
      }
    }
  }, "scale_bias");
}

Var MaskedScaleBias(Var h, std::span<const uint8_t> row_mask, Var on_scale,
                    Var on_bias, Var off_scale, Var off_bias) {
  for (Var v : {on_scale, on_bias, off_scale, off_bias}) {
    RequireSameTape(h, v, "masked_scale_bias");
  }
  const Tensor& hv = h.value();
  const int64_t rows = hv.rows(), cols = hv.cols();
  if (static_cast<int64_t>(row_mask.size()) != rows) {
    throw DimensionError("masked_scale_bias: mask has " +
                         std::to_string(row_mask.size()) + " entries for " +
                         std::to_string(rows) + " rows");
  }
  RequireVectorOfLength(on_scale.value(), cols, "masked_scale_bias", "scale");
  RequireVectorOfLength(on_bias.value(), cols, "masked_scale_bias", "bias");
  RequireVectorOfLength(off_scale.value(), cols, "masked_scale_bias", "scale");
  RequireVectorOfLength(off_bias.value(), cols, "masked_scale_bias", "bias");
  std::vector<uint8_t> mask(row_mask.begin(), row_mask.end());
  Tensor out(hv.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const auto s = (mask[r] ? on_scale : off_scale).value().data();
    const auto b = (mask[r] ? on_bias : off_bias).value().data();
    for (int64_t c = 0; c < cols; ++c) {
      out[r * cols + c] = hv[r * cols + c] * s[c] + b[c];
    }
  }
  const int ih = h.id();
  const int ids[4] = {on_scale.id(), on_bias.id(), off_scale.id(), off_bias.id()};
  Tape& tape = h.tape();
  const int io = tape.size();
  return tape.Push(
      std::move(out), {h, on_scale, on_bias, off_scale, off_bias},
      [ih, ids0 = ids[0], ids1 = ids[1], ids2 = ids[2], ids3 = ids[3], io, rows,
       cols, mask = std::move(mask)](Tape& t) {
        const Tensor& g = *t.GradIfAny(io);
        const Tensor& x = t.value(ih);
        if (t.needs_grad(ih)) {
          Tensor& d = t.GradBuffer(ih);
          for (int64_t r = 0; r < rows; ++r) {
            const Tensor& s = t.value(mask[r] ? ids0 : ids2);
            for (int64_t c = 0; c < cols; ++c) {
              d[r * cols + c] += g[r * cols + c] * s[c];
            }
          }
        }
        for (int group = 0; group < 2; ++group) {
          const int is = group == 0 ? ids0 : ids2;
          const int ib = group == 0 ? ids1 : ids3;
          const uint8_t want = group == 0 ? 1 : 0;
          const bool ds = t.needs_grad(is), db = t.needs_grad(ib);
          if (!ds && !db) continue;
          for (int64_t r = 0; r < rows; ++r) {
            if ((mask[r] ? 1 : 0) != want) continue;
            for (int64_t c = 0; c < cols; ++c) {
              if (ds) t.GradBuffer(is)[c] += g[r * cols + c] * x[r * cols + c];
              if (db) t.GradBuffer(ib)[c] += g[r * cols + c];
            }
          }
        }
      },
      "masked_scale_bias");
}

Var Relu(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  const int ia = a.id();
  Tape& tape = a.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {a}, [ia, io](Tape& t) {
    const Tensor& g = *t.GradIfAny(io);
    const Tensor& x = t.value(ia);
    Tensor& d = t.GradBuffer(ia);
    for (int64_t i = 0; i < d.size(); ++i) {
      if (x[i] > 0.0) d[i] += g[i];
    }
  }, "relu");
}

Var LayerNorm(Var x, Var gamma, Var beta, double eps) {
  RequireSameTape(x, gamma, "layer_norm");
  RequireSameTape(x, beta, "layer_norm");
  const Tensor& xv = x.value();
  const int64_t rows = xv.rows(), cols = xv.cols();
  if (cols == 0) throw DimensionError("layer_norm: empty feature axis");
  RequireVectorOfLength(gamma.value(), cols, "layer_norm", "gamma");
  RequireVectorOfLength(beta.value(), cols, "layer_norm", "beta");
  const auto gm = gamma.value().data();
  const auto bt = beta.value().data();
  Tensor out(xv.shape());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  for (int64_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (int64_t c = 0; c < cols; ++c) mean += xv[r * cols + c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      const double dv = xv[r * cols + c] - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (int64_t c = 0; c < cols; ++c) {
      const double xh = (xv[r * cols + c] - mean) * inv_std[r];
      xhat[r * cols + c] = xh;
      out[r * cols + c] = xh * gm[c] + bt[c];
    }
  }
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  Tape& tape = x.tape();
  const int io = tape.size();
  return tape.Push(
      std::move(out), {x, gamma, beta},
      [ix, ig, ib, io, rows, cols, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape& t) {
        const Tensor& g = *t.GradIfAny(io);
        if (t.needs_grad(ig) || t.needs_grad(ib)) {
          const bool dg = t.needs_grad(ig), db = t.needs_grad(ib);
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) {
              if (dg) t.GradBuffer(ig)[c] += g[r * cols + c] * xhat[r * cols + c];
              if (db) t.GradBuffer(ib)[c] += g[r * cols + c];
            }
          }
        }
        if (t.needs_grad(ix)) {
          const Tensor& gm = t.value(ig);
          Tensor& d = t.GradBuffer(ix);
          const double n = static_cast<double>(cols);
          for (int64_t r = 0; r < rows; ++r) {
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int64_t c = 0; c < cols; ++c) {
              const double dxh = g[r * cols + c] * gm[c];
              sum_dxh += dxh;
              sum_dxh_xh += dxh * xhat[r * cols + c];
            }
            for (int64_t c = 0; c < cols; ++c) {
              const double dxh = g[r * cols + c] * gm[c];
              d[r * cols + c] += inv_std[r] *
                                 (dxh - sum_dxh / n - xhat[r * cols + c] * sum_dxh_xh / n);
            }
          }
        }
      },
      "layer_norm");
}

Var Softmax(Var x, int axis) {
  const Tensor& xv = x.value();
  const int rank = std::max(xv.rank(), 1);
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError("softmax: axis out of range for shape " +
                         ShapeToString(xv.shape()));
  }
  const Shape& shape = xv.shape();
  const int64_t len = shape.empty() ? 1 : shape[axis];
  if (len == 0) throw DimensionError("softmax: empty axis");
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) inner *= shape[i];
  Tensor out(shape);
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      double total = 0.0;
      for (int64_t k = 0; k < len; ++k) {
        const double e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (int64_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  const int ix = x.id();
  Tape& tape = x.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {x}, [ix, io, outer, inner, len](Tape& t) {
    const Tensor& g = *t.GradIfAny(io);
    const Tensor& y = t.value(io);
    Tensor& d = t.GradBuffer(ix);
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        const int64_t base = o * len * inner + in;
        double dot = 0.0;
        for (int64_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
        for (int64_t k = 0; k < len; ++k) {
          const int64_t i = base + k * inner;
          d[i] += y[i] * (g[i] - dot);
        }
      }
    }
  }, "softmax");
}

Var MaskedSoftmax(Var x, std::span<const uint8_t> keep) {
  const Tensor& xv = x.value();
  if (static_cast<int64_t>(keep.size()) != xv.size()) {
    throw DimensionError("masked_softmax: mask size differs from input size");
  }
  const int64_t rows = xv.rows(), cols = xv.cols();
  if (cols == 0) throw DimensionError("masked_softmax: empty axis");
  Tensor out(xv.shape());
  for (int64_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < cols; ++c) {
      if (keep[r * cols + c]) mx = std::max(mx, xv[r * cols + c]);
    }
    if (!std::isfinite(mx)) {
      throw ContractError("masked_softmax: row " + std::to_string(r) +
                          " has no unmasked entries");
    }
    double total = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      if (!keep[r * cols + c]) continue;
      const double e = std::exp(xv[r * cols + c] - mx);
      out[r * cols + c] = e;
      total += e;
    }
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] /= total;
  }
  const int ix = x.id();
  Tape& tape = x.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {x}, [ix, io, rows, cols](Tape& t) {
    const Tensor& g = *t.GradIfAny(io);
    const Tensor& y = t.value(io);
    Tensor& d = t.GradBuffer(ix);
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int64_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (int64_t c = 0; c < cols; ++c) {
        const int64_t i = r * cols + c;
        d[i] += y[i] * (g[i] - dot);
      }
    }
  }, "masked_softmax");
}

Var LogSoftmax(Var x) {
  const Tensor& xv = x.value();
  const int64_t rows = xv.rows(), cols = xv.cols();
  if (cols == 0) throw DimensionError("log_softmax: empty axis");
  Tensor out(xv.shape());
  for (int64_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < cols; ++c) mx = std::max(mx, xv[r * cols + c]);
    double total = 0.0;
    for (int64_t c = 0; c < cols; ++c) total += std::exp(xv[r * cols + c] - mx);
    const double lse = mx + std::log(total);
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] - lse;
  }
  const int ix = x.id();
  Tape& tape = x.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {x}, [ix, io, rows, cols](Tape& t) {
    const Tensor& g = *t.GradIfAny(io);
    const Tensor& y = t.value(io);
    Tensor& d = t.GradBuffer(ix);
    for (int64_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (int64_t c = 0; c < cols; ++c) total += g[r * cols + c];
      for (int64_t c = 0; c < cols; ++c) {
        const int64_t i = r * cols + c;
        d[i] += g[i] - std::exp(y[i]) * total;
      }
    }
  }, "log_softmax");
}

Var NllLoss(Var logprobs, std::span<const int> targets) {
  const Tensor& lp = logprobs.value();
  const int64_t rows = lp.rows(), cols = lp.cols();
  if (static_cast<int64_t>(targets.size()) != rows) {
    throw DimensionError("nll_loss: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(rows) + " rows");
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  double total = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    if (tgt[r] < 0 || tgt[r] >= cols) {
      throw DimensionError("nll_loss: target id " + std::to_string(tgt[r]) +
                           " out of range");
    }
    total -= lp[r * cols + tgt[r]];
  }
  const int il = logprobs.id();
  Tape& tape = logprobs.tape();
  const int io = tape.size();
  return tape.Push(Tensor::Scalar(total), {logprobs},
                   [il, io, cols, tgt = std::move(tgt)](Tape& t) {
    const double g = (*t.GradIfAny(io))[0];
    Tensor& d = t.GradBuffer(il);
    for (size_t r = 0; r < tgt.size(); ++r) d[r * cols + tgt[r]] -= g;
  }, "nll_loss");
}

Var Gather(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  RequireRank2(tv, "gather");
  const int64_t vocab = tv.shape()[0], cols = tv.shape()[1];
  const auto n = static_cast<int64_t>(ids.size());
  std::vector<int> idx(ids.begin(), ids.end());
  Tensor out(Shape{n, cols});
  for (int64_t r = 0; r < n; ++r) {
    if (idx[r] < 0 || idx[r] >= vocab) {
      throw DimensionError("gather: id " + std::to_string(idx[r]) +
                           " out of range for table of " + std::to_string(vocab));
    }
    std::copy_n(tv.data().begin() + idx[r] * cols, cols,
                out.data().begin() + r * cols);
  }
  const int it = table.id();
  Tape& tape = table.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {table}, [it, io, cols, idx = std::move(idx)](Tape& t) {
    const Tensor& g = *t.GradIfAny(io);
    Tensor& d = t.GradBuffer(it);
    for (size_t r = 0; r < idx.size(); ++r) {
      for (int64_t c = 0; c < cols; ++c) d[idx[r] * cols + c] += g[r * cols + c];
    }
  }, "gather");
}

Var SliceCols(Var x, int64_t begin, int64_t end) {
  const Tensor& xv = x.value();
  const int64_t rows = xv.rows(), cols = xv.cols();
  if (begin < 0 || end > cols || begin >= end) {
    throw DimensionError("slice_cols: invalid range [" + std::to_string(begin) +
                         ", " + std::to_string(end) + ") for " +
                         std::to_string(cols) + " columns");
  }
  const int64_t width = end - begin;
  Tensor out(Shape{rows, width});
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data().begin() + r * cols + begin, width,
                out.data().begin() + r * width);
  }
  const int ix = x.id();
  Tape& tape = x.tape();
  const int io = tape.size();
  return tape.Push(std::move(out), {x}, [ix, io, rows, cols, begin, width](Tape& t) {
    const Tensor& g = *t.GradIfAny(io);
    Tensor& d = t.GradBuffer(ix);
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t c = 0; c < width; ++c) d[r * cols + begin + c] += g[r * width + c];
    }
  }, "slice_cols");
}

Var ConcatCols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const int64_t rows = parts[0].value().rows();
  int64_t total = 0;
  std::vector<int64_t> widths;
  std::vector<int> ids;
  for (const Var& p : parts) {
    RequireSameTape(parts[0], p, "concat_cols");
    if (p.value().rows() != rows) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.value().cols());
    ids.push_back(p.id());
    total += p.value().cols();
  }
  Tensor out(Shape{rows, total});
  int64_t offset = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (int64_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data().begin() + r * widths[k], widths[k],
                  out.data().begin() + r * total + offset);
    }
    offset += widths[k];
  }
  Tape& tape = parts[0].tape();
  const int io = tape.size();
  return tape.Push(std::move(out), parts,
                   [io, rows, total, widths = std::move(widths),
                    ids = std::move(ids)](Tape& t) {
    const Tensor& g = *t.GradIfAny(io);
    int64_t off = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) {
        Tensor& d = t.GradBuffer(ids[k]);
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t c = 0; c < widths[k]; ++c) {
            d[r * widths[k] + c] += g[r * total + off + c];
          }
        }
      }
      off += widths[k];
    }
  }, "concat_cols");
}

Var Sum(Var x) {
  const Tensor& xv = x.value();
  double total = 0.0;
  for (double v : xv.data()) total += v;
  const int ix = x.id();
  Tape& tape = x.tape();
  const int io = tape.size();
  return tape.Push(Tensor::Scalar(total), {x}, [ix, io](Tape& t) {
    const double g = (*t.GradIfAny(io))[0];
    for (double& v : t.GradBuffer(ix).data()) v += g;
  }, "sum");
}

// ---------------------------------------------------------------------------

Tensor FiniteDiffGrad(const std::function<double(const Tensor&)>& f,
                      const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_grad: eps must be positive");
  Tensor probe = x;
  Tensor grad(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  CheckFinite(grad, "finite_diff_grad");
  return grad;
}

void AdamStep(std::span<Tensor* const> params, std::span<const Tensor> grads,
              AdamState& state) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) +
                         " parameters but " + std::to_string(grads.size()) +
                         " gradients");
  }
  if (state.first_moment.empty()) {
    for (Tensor* p : params) {
      state.first_moment.emplace_back(p->shape(), 0.0);
      state.second_moment.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: parameter list changed between steps");
  }
  for (size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape() != grads[k].shape() ||
        params[k]->shape() != state.first_moment[k].shape()) {
      throw DimensionError("adam_step: shape mismatch for parameter " +
                           std::to_string(k) + ": " +
                           ShapeToString(params[k]->shape()) + " vs gradient " +
                           ShapeToString(grads[k].shape()));
    }
  }
  const AdamOptions& o = state.options;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - o.lr * o.weight_decay;
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    const Tensor& g = grads[k];
    for (int64_t i = 0; i < p.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      if (o.weight_decay != 0.0) p[i] *= decay;
      p[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
    CheckFinite(p, "adam_step");
  }
}

}  // namespace focusvec
