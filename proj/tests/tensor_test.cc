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

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "focusvec/checkpoint.h"
#include "focusvec/errors.h"
#include "gradcheck.h"

namespace focusvec {
namespace {

using testing::CheckGradients;
using testing::PrimitiveCases;
using testing::RandomCompositeCase;

class PrimitiveGradientTest : public ::testing::TestWithParam<size_t> {};

TEST_P(PrimitiveGradientTest, MatchesFiniteDifferences) {
  const auto cases = PrimitiveCases();
  const auto& c = cases[GetParam()];
  const auto result = CheckGradients(c);
  EXPECT_LT(result.max_relative_error, 1e-4) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradientTest,
                         ::testing::Range<size_t>(0, PrimitiveCases().size()),
                         [](const auto& info) { return PrimitiveCases()[info.param].name; });

TEST(CompositeGradientTest, TwentyRandomGraphs) {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const auto c = RandomCompositeCase(seed);
    const auto result = CheckGradients(c, seed);
    EXPECT_LE(result.parameters, 1000) << c.name;
    EXPECT_LT(result.max_relative_error, 1e-4) << c.name;
  }
}

TEST(TensorTest, ShapeAndAccessors) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.rank(), 2);
  EXPECT_EQ(t.size(), 6);
  EXPECT_EQ(t.rows(), 2);
  EXPECT_EQ(t.cols(), 3);
  t.at(1, 2) = 4.0;
  EXPECT_EQ(t[5], 4.0);
  EXPECT_EQ(ShapeToString(t.shape()), "[2, 3]");
  EXPECT_EQ(Tensor::Scalar(2.0).item(), 2.0);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(TensorTest, BitEqualDistinguishesSignedZero) {
  Tensor a({2}, 0.0);
  Tensor b({2}, 0.0);
  EXPECT_TRUE(a.BitEqual(b));
  b[1] = -0.0;
  EXPECT_FALSE(a.BitEqual(b));
  EXPECT_FALSE(a.BitEqual(Tensor({1, 2}, 0.0)));
}

TEST(TensorTest, AllFiniteAndCheckFinite) {
  Tensor t({3}, 1.0);
  EXPECT_TRUE(t.AllFinite());
  CheckFinite(t, "t");
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.AllFinite());
  EXPECT_THROW(CheckFinite(t, "t"), NumericFailure);
}

TEST(TensorTest, MatMulValues) {
  Tape tape;
  Var a = tape.Constant(Tensor::Matrix({{1, 2}, {3, 4}}));
  Var b = tape.Constant(Tensor::Matrix({{5, 6}, {7, 8}}));
  const Tensor c = MatMul(a, b).value();
  EXPECT_TRUE(c.BitEqual(Tensor::Matrix({{19, 22}, {43, 50}})));
  const Tensor d = MatMulTransposed(a, b).value();
  EXPECT_TRUE(d.BitEqual(Tensor::Matrix({{17, 23}, {39, 53}})));
}

TEST(TensorTest, ShapeMismatchThrowsDimensionError) {
  Tape tape;
  Var a = tape.Constant(Tensor({2, 3}));
  Var b = tape.Constant(Tensor({2, 3}));
  EXPECT_THROW(MatMul(a, b), DimensionError);
  EXPECT_THROW(Add(a, tape.Constant(Tensor({3, 2}))), DimensionError);
  EXPECT_THROW(SliceCols(a, 2, 5), DimensionError);
}

TEST(TensorTest, SoftmaxRowsSumToOne) {
  Tape tape;
  Var x = tape.Constant(Tensor::Matrix({{1000, 1001, 999}, {-5, 0, 5}}));
  const Tensor p = Softmax(x).value();
  for (int r = 0; r < 2; ++r) {
    double sum = 0;
    for (int c = 0; c < 3; ++c) sum += p.at(r, c);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  EXPECT_TRUE(p.AllFinite());
}

TEST(TensorTest, MaskedSoftmaxGivesExactZeros) {
  Tape tape;
  Var x = tape.Constant(Tensor::Matrix({{1, 2, 3}}));
  const std::vector<uint8_t> keep = {1, 0, 1};
  const Tensor p = MaskedSoftmax(x, keep).value();
  EXPECT_EQ(p[1], 0.0);
  EXPECT_NEAR(p[0] + p[2], 1.0, 1e-15);
}

TEST(TensorTest, IdentityScaleBiasIsExact) {
  Rng rng(3);
  const Tensor h = testing::RandomTensor(rng, {4, 5});
  Tape tape;
  Var out = ScaleBias(tape.Constant(h), tape.Constant(Tensor({5}, 1.0)),
                      tape.Constant(Tensor({5}, 0.0)));
  EXPECT_TRUE(out.value().BitEqual(h));
}

TEST(TensorTest, LeafRegistrationIsIdempotent) {
  Tensor w({2, 2}, 1.0);
  w.set_requires_grad(true);
  Tape tape;
  Var a = tape.Leaf(w);
  Var b = tape.Leaf(w);
  EXPECT_EQ(a.id(), b.id());
  tape.Backward(Sum(Add(a, b)));
  EXPECT_TRUE(tape.GradFor(w).BitEqual(Tensor({2, 2}, 2.0)));
}

TEST(TensorTest, BackwardDoesNotAccumulateAcrossCalls) {
  Tape tape;
  Var x = tape.Input(Tensor::Vector({1, 2}), true);
  Var loss = Sum(Mul(x, x));
  tape.Backward(loss);
  tape.Backward(loss);
  EXPECT_TRUE(tape.Grad(x).BitEqual(Tensor::Vector({2, 4})));
}

TEST(TensorTest, FrozenLeafReceivesNoGradient) {
  Tensor w({2}, 1.0);
  Tape tape;
  Var a = tape.Leaf(w);
  Var x = tape.Input(Tensor::Vector({3, 4}), true);
  tape.Backward(Sum(Mul(a, x)));
  EXPECT_EQ(tape.FindGrad(w), nullptr);
  EXPECT_TRUE(tape.Grad(x).BitEqual(Tensor::Vector({1, 1})));
}

TEST(TensorTest, FiniteDiffGradOfQuadratic) {
  const Tensor x = Tensor::Vector({1.0, -2.0});
  const Tensor g = FiniteDiffGrad(
      [](const Tensor& t) { return t[0] * t[0] + 3 * t[1]; }, x);
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 3.0, 1e-8);
}

TEST(AdamTest, FirstStepMovesByLearningRateAgainstGradientSign) {
  Tensor theta({2}, 0.0);
  Tensor* params[] = {&theta};
  const Tensor grads[] = {Tensor::Vector({1.0, -1.0})};
  AdamState state(AdamOptions{.lr = 0.1, .weight_decay = 0.0});
  AdamStep(params, grads, state);
  EXPECT_NEAR(theta[0], -0.1, 1e-7);
  EXPECT_NEAR(theta[1], 0.1, 1e-7);
  EXPECT_EQ(state.step, 1);
}

TEST(AdamTest, DecoupledWeightDecayShrinksParameters) {
  Tensor theta({1}, 2.0);
  Tensor* params[] = {&theta};
  const Tensor grads[] = {Tensor({1}, 0.0)};
  AdamState state(AdamOptions{.lr = 0.1, .weight_decay = 0.5});
  AdamStep(params, grads, state);
  EXPECT_NEAR(theta[0], 2.0 * (1 - 0.05), 1e-12);
}

TEST(AdamTest, NonFiniteGradientThrows) {
  Tensor theta({1}, 0.0);
  Tensor* params[] = {&theta};
  const Tensor grads[] = {Tensor({1}, std::numeric_limits<double>::infinity())};
  AdamState state;
  EXPECT_THROW(AdamStep(params, grads, state), NumericFailure);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("focusvec_ckpt_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  Rng rng(11);
  Container c;
  c.type = "model";
  c.meta = {{"answer", 42}};
  c.tensors.push_back({"a", testing::RandomTensor(rng, {3, 4})});
  c.tensors.push_back({"b", Tensor::Vector({-0.0, 1e-300, 3.5})});
  const std::string path = (dir_ / "x.ckpt").string();
  WriteContainer(path, c);
  const Container back = ReadContainer(path);
  EXPECT_EQ(back.type, "model");
  EXPECT_EQ(back.meta["answer"], 42);
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_TRUE(back.Get("a").BitEqual(c.tensors[0].tensor));
  EXPECT_TRUE(back.Get("b").BitEqual(c.tensors[1].tensor));
  EXPECT_THROW(back.Get("missing"), ParseError);
}

TEST_F(CheckpointTest, CorruptFilesAreParseErrors) {
  const std::string path = (dir_ / "bad.ckpt").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT";
  }
  EXPECT_THROW(ReadContainer(path), ParseError);
  Container c;
  c.type = "model";
  c.tensors.push_back({"a", Tensor({8}, 1.0)});
  WriteContainer(path, c);
  std::string bytes = ReadFile(path);
  bytes.resize(bytes.size() - 8);
  WriteFileAtomic(path, bytes);
  EXPECT_THROW(ReadContainer(path), ParseError);
}

}  // namespace
}  // namespace focusvec
