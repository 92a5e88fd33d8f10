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

// Dense tensors with a reverse-mode gradient tape and an Adam optimizer.
//
// All values are stored as double. Every operation treats a tensor as a
// row-major matrix whose column count is the last extent (a rank-1 tensor is a
// single row). Operations record themselves on the Tape that owns their
// inputs; Tape::Backward replays the record in reverse.
//
//   Tape tape;
//   Var w = tape.Leaf(weights);          // weights.requires_grad() == true
//   Var loss = Sum(Relu(MatMul(x, w)));
//   tape.Backward(loss);
//   Tensor dw = tape.Grad(w);

#ifndef FOCUSVEC_TENSOR_H_
#define FOCUSVEC_TENSOR_H_

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace focusvec {

using Shape = std::vector<int64_t>;

int64_t NumElements(const Shape& shape);

// Allocates on 64-byte boundaries so that vectorized kernels take the same
// code path, and round the same way, for every buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;
std::string ShapeToString(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Scalar(double value);
  static Tensor Vector(std::vector<double> values);
  static Tensor Matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }
  // Matrix view: the last extent is the column count.
  int64_t cols() const;
  int64_t rows() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }
  double& at(int64_t r, int64_t c) { return data_[r * cols() + c]; }
  double at(int64_t r, int64_t c) const { return data_[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool value) { requires_grad_ = value; }

  void Fill(double value);
  bool AllFinite() const;
  // Equality of shape and of the bit patterns of all values.
  bool BitEqual(const Tensor& other) const;

 private:
  Shape shape_;
  AlignedVector data_;
  bool requires_grad_ = false;
};

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Ordered record of differentiable operations. A tape is confined to a single
// thread. Leaves created from external tensors reference them without copying,
// so the tensors must outlive the tape.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // References `tensor`. Gradients are tracked iff tensor.requires_grad().
  // Registering the same tensor twice returns the same node.
  Var Leaf(const Tensor& tensor);
  // Copies `tensor` into the tape as a leaf that tracks gradients when
  // `requires_grad` is set.
  Var Input(Tensor tensor, bool requires_grad);
  Var Constant(Tensor tensor) { return Input(std::move(tensor), false); }

  // Records an operation output. `backward` is dropped when no parent needs
  // gradients. `op` names the operation in numeric-failure messages.
  Var Push(Tensor value, std::initializer_list<Var> parents, BackwardFn backward,
           const char* op);
  Var Push(Tensor value, const std::vector<Var>& parents, BackwardFn backward,
           const char* op);

  // Reverse accumulation from a scalar node. Gradient buffers are cleared
  // first, so repeated calls do not accumulate.
  void Backward(Var loss);

  const Tensor& value(int id) const;
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  // Gradient of the last Backward with respect to `v`; zeros when unreachable.
  Tensor Grad(Var v) const;
  // Gradient for a tensor previously registered with Leaf(); zeros when the
  // tensor never entered the tape.
  Tensor GradFor(const Tensor& tensor) const;
  bool HasLeaf(const Tensor& tensor) const;
  // Like GradFor without the copy; nullptr when no gradient reached `tensor`.
  const Tensor* FindGrad(const Tensor& tensor) const;

  // Mutable gradient buffer, zero-initialized on first access. For use by
  // backward functions.
  Tensor& GradBuffer(int id);
  const Tensor* GradIfAny(int id) const;

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, int> leaf_index_;
};

// ---------------------------------------------------------------------------
// Differentiable primitives. All inputs must live on the same tape.

// a [m, k] x b [k, n] -> [m, n].
Var MatMul(Var a, Var b);
// a [m, k] x b[n, k]^T -> [m, n].
Var MatMulTransposed(Var a, Var b);
Var Add(Var a, Var b);
// Adds a [cols] vector to every row of `a`.
Var AddBias(Var a, Var bias);
Var Mul(Var a, Var b);
Var Scale(Var a, double factor);
// Adds a constant; `c` has the shape of `a` or is a [cols] row broadcast.
Var AddConstant(Var a, const Tensor& c);
// h * scale + bias with [d] vectors broadcast over rows of h [n, d].
Var ScaleBias(Var h, Var scale, Var bias);
// Row-selected ScaleBias: rows with row_mask[i] != 0 use (on_scale, on_bias),
// the remaining rows use (off_scale, off_bias).
Var MaskedScaleBias(Var h, std::span<const uint8_t> row_mask, Var on_scale,
                    Var on_bias, Var off_scale, Var off_bias);
Var Relu(Var a);
// Per-row layer normalization over the last dimension.
Var LayerNorm(Var x, Var gamma, Var beta, double eps = 1e-5);
// Numerically stable softmax along `axis` (negative counts from the back).
Var Softmax(Var x, int axis = -1);
// Row softmax over the last axis restricted to entries with keep[i] != 0;
// excluded entries get exactly zero weight. `keep` has x's size.
Var MaskedSoftmax(Var x, std::span<const uint8_t> keep);
Var LogSoftmax(Var x);
// -sum_i logprobs[i, targets[i]].
Var NllLoss(Var logprobs, std::span<const int> targets);
// Rows of `table` [V, d] selected by ids -> [n, d].
Var Gather(Var table, std::span<const int> ids);
Var SliceCols(Var x, int64_t begin, int64_t end);
Var ConcatCols(const std::vector<Var>& parts);
Var Sum(Var x);

// ---------------------------------------------------------------------------

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
Tensor FiniteDiffGrad(const std::function<double(const Tensor&)>& f,
                      const Tensor& x, double eps = 1e-5);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled: theta <- theta * (1 - lr * weight_decay) before the Adam step.
  double weight_decay = 0.01;
};

struct AdamState {
  explicit AdamState(AdamOptions opts = {}) : options(opts) {}
  AdamOptions options;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  int64_t step = 0;
};

// One bias-corrected Adam update of `params` in place. Moments are allocated
// on the first call; later calls must pass the same parameter list.
void AdamStep(std::span<Tensor* const> params, std::span<const Tensor> grads,
              AdamState& state);

// Throws NumericFailure naming `what` if any element is NaN or Inf.
void CheckFinite(const Tensor& t, const std::string& what);

}  // namespace focusvec

#endif  // FOCUSVEC_TENSOR_H_
