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

#include "focusvec/evalkit.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "focusvec/errors.h"
#include "focusvec/focus_vectors.h"
#include "test_util.h"

namespace focusvec {
namespace {

using testing::RandomExamples;
using testing::TinyConfig;

TEST(RougeTest, IdenticalSequencesScoreOne) {
  for (auto v : {RougeVariant::kRouge1, RougeVariant::kRouge2, RougeVariant::kRougeL}) {
    const auto s = Rouge("a b c d", "a b c d", v);
    EXPECT_DOUBLE_EQ(s.f1, 1.0);
  }
}

TEST(RougeTest, UnigramHandCase) {
  const auto s = Rouge("the cat", "the cat sat", RougeVariant::kRouge1);
  EXPECT_NEAR(s.precision, 1.0, 1e-9);
  EXPECT_NEAR(s.recall, 2.0 / 3.0, 1e-9);
  EXPECT_NEAR(s.f1, 0.8, 1e-9);
}

TEST(RougeTest, LcsHandCase) {
  const auto s = Rouge("a c b", "a b c", RougeVariant::kRougeL);
  EXPECT_NEAR(s.precision, 2.0 / 3.0, 1e-9);
  EXPECT_NEAR(s.recall, 2.0 / 3.0, 1e-9);
  EXPECT_NEAR(s.f1, 2.0 / 3.0, 1e-9);
}

TEST(RougeTest, BigramHandCase) {
  // Bigrams: cand {the cat, cat sat}, ref {the cat, cat is, is here}.
  const auto s = Rouge("the cat sat", "the cat is here", RougeVariant::kRouge2);
  EXPECT_NEAR(s.precision, 0.5, 1e-12);
  EXPECT_NEAR(s.recall, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.f1, 0.4, 1e-12);
}

TEST(RougeTest, ClipsRepeatedNgrams) {
  const auto s = Rouge("the the the", "the cat", RougeVariant::kRouge1);
  EXPECT_NEAR(s.precision, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.recall, 0.5, 1e-12);
}

TEST(RougeTest, EmptyAndShortSequences) {
  for (auto v : {RougeVariant::kRouge1, RougeVariant::kRouge2, RougeVariant::kRougeL}) {
    const auto s = Rouge("", "a b", v);
    EXPECT_EQ(s.precision, 0.0);
    EXPECT_EQ(s.recall, 0.0);
    EXPECT_EQ(s.f1, 0.0);
  }
  EXPECT_EQ(Rouge("a", "a", RougeVariant::kRouge2).f1, 0.0);
  EXPECT_EQ(Rouge("", "", RougeVariant::kRouge1).f1, 0.0);
}

TEST(RougeTest, SwappingArgumentsSwapsPrecisionAndRecall) {
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"a b c d e", "a c e f"}, {"x y x y", "y x"}, {"p q r", "r q p s"}};
  for (const auto& [c, r] : pairs) {
    for (auto v : {RougeVariant::kRouge1, RougeVariant::kRouge2, RougeVariant::kRougeL}) {
      const auto ab = Rouge(c, r, v);
      const auto ba = Rouge(r, c, v);
      EXPECT_DOUBLE_EQ(ab.precision, ba.recall);
      EXPECT_DOUBLE_EQ(ab.recall, ba.precision);
      EXPECT_DOUBLE_EQ(ab.f1, ba.f1);
    }
  }
}

TEST(PerplexityTest, UniformModelEqualsVocabularySize) {
  for (int v : {6, 24, 117}) {
    const ModelConfig c = TinyConfig(v);
    const Model m(c);
    const auto data = RandomExamples(10, 3, std::min(v, 24));
    const double ppl = Perplexity(m, data, [](const EncodedExample&) {
      return ControlDirective::Vanilla();
    });
    EXPECT_NEAR(ppl, static_cast<double>(v), 1e-6);
  }
}

TEST(PerplexityTest, IdentityFocusEqualsVanillaExactly) {
  const ModelConfig c = TinyConfig();
  const Model m = Model::Initialize(c, 4);
  const FocusVectors fv = FocusVectors::Identity(c.encoder_layers, c.d_model);
  const auto data = RandomExamples(10, 5, c.vocab_size);
  const double vanilla = Perplexity(m, data, [](const EncodedExample&) {
    return ControlDirective::Vanilla();
  });
  const double focus = Perplexity(m, data, [&](const EncodedExample& ex) {
    return ControlDirective::Focus(HighlightMask(ex.spans, ex.highlights), fv);
  });
  EXPECT_EQ(vanilla, focus);
}

TEST(PerplexityTest, TotalsCountEos) {
  const ModelConfig c = TinyConfig();
  const Model m(c);
  const auto data = RandomExamples(4, 6, c.vocab_size);
  int64_t tokens = 0;
  for (const auto& ex : data) tokens += static_cast<int64_t>(ex.target.size());
  const auto totals = DatasetNll(m, data, [](const EncodedExample&) {
    return ControlDirective::Vanilla();
  });
  EXPECT_EQ(totals.tokens, tokens);
  EXPECT_NEAR(totals.MeanNll(), std::log(24.0), 1e-12);
  EXPECT_THROW(Perplexity(m, {}, [](const EncodedExample&) {
                 return ControlDirective::Vanilla();
               }),
               ContractError);
}

TEST(Top1PrecisionTest, Percentages) {
  const std::vector<std::vector<int>> rankings = {{0, 1}, {1, 0}, {2, 1, 0}, {0}};
  const std::vector<std::vector<int>> gold = {{0}, {0}, {1, 2}, {0}};
  EXPECT_DOUBLE_EQ(Top1Precision(rankings, gold), 75.0);
  const std::vector<std::vector<int>> all_gold = {{0, 1}, {0, 1}, {0, 1, 2}, {0}};
  EXPECT_DOUBLE_EQ(Top1Precision(rankings, all_gold), 100.0);
  const std::vector<std::vector<int>> missing = {{0}, {}, {1}, {0}};
  EXPECT_THROW(Top1Precision(rankings, missing), ContractError);
  const std::vector<std::vector<int>> short_gold = {{0}};
  EXPECT_THROW(Top1Precision(rankings, short_gold), ContractError);
}

TEST(Top1PrecisionTest, MonotoneUnderAddingCorrectExamples) {
  std::vector<std::vector<int>> rankings = {{1, 0}, {0, 1}};
  std::vector<std::vector<int>> gold = {{0}, {0}};
  double last = Top1Precision(rankings, gold);
  for (int k = 0; k < 5; ++k) {
    rankings.push_back({0});
    gold.push_back({0});
    const double now = Top1Precision(rankings, gold);
    EXPECT_GE(now, last);
    last = now;
  }
}

TEST(BinomialTest, ValueErrorAndNoise) {
  const BinomialEstimate b{25, 100};
  EXPECT_DOUBLE_EQ(b.value(), 0.25);
  EXPECT_DOUBLE_EQ(b.Percentage(), 25.0);
  EXPECT_NEAR(b.StandardError(), std::sqrt(0.25 * 0.75 / 100), 1e-15);
  EXPECT_TRUE(b.WithinNoiseOf(0.25));
  EXPECT_TRUE((BinomialEstimate{37, 100}).WithinNoiseOf(0.25));   // 2.77 sd
  EXPECT_FALSE((BinomialEstimate{39, 100}).WithinNoiseOf(0.25));  // 3.23 sd
  const auto [lo, hi] = b.Wilson();
  EXPECT_LT(lo, 0.25);
  EXPECT_GT(hi, 0.25);
  EXPECT_EQ((BinomialEstimate{0, 0}).value(), 0.0);
}

Example FactExample() {
  Example ex;
  ex.id = "e";
  ex.input_sentences = {"the color of ivan is red .", "it was a quiet day .",
                        "the city of peggy is paris ."};
  ex.target = "peggy has city paris .";
  ex.highlights = std::vector<int>{2};
  return ex;
}

TEST(SteeringTest, ExactMatchSemantics) {
  Example a = FactExample();
  Example b = FactExample();
  b.highlights = std::vector<int>{0};
  const Dataset data = {a, b, a};
  EXPECT_EQ(ExpectedRendering(a), "peggy has city paris .");
  EXPECT_EQ(ExpectedRendering(b), "ivan has color red .");
  const std::vector<std::string> gens = {"peggy has city paris .", "ivan has color blue .",
                                         "peggy has city paris"};
  const auto acc = SteeringAccuracy(gens, data);
  EXPECT_EQ(acc.successes, 1);
  EXPECT_EQ(acc.trials, 3);
}

TEST(SteeringTest, NonSyntheticIsContractError) {
  Example ex = FactExample();
  ex.highlights = std::vector<int>{1};
  EXPECT_THROW(ExpectedRendering(ex), ContractError);
  ex.highlights.reset();
  EXPECT_THROW(ExpectedRendering(ex), ContractError);
  const std::vector<std::string> gens = {"x"};
  EXPECT_THROW(SteeringAccuracy(gens, Dataset{FactExample(), FactExample()}), ContractError);
}

TEST(SteeringTest, MultiFactRendering) {
  Example ex = FactExample();
  ex.highlights = std::vector<int>{0, 2};
  EXPECT_EQ(ExpectedRendering(ex), "ivan has color red . peggy has city paris .");
}

TEST(ShiftReportTest, ShapeAndIdentityRowsMatchVanilla) {
  const Example ex = FactExample();
  const Vocab vocab = Vocab::Build(CorpusTexts(Dataset{ex}));
  const ModelConfig c = TinyConfig(vocab.size());
  const Model m = Model::Initialize(c, 9);
  const EncodedExample enc = EncodeExample(ex, vocab);
  const FocusVectors fv = FocusVectors::Identity(c.encoder_layers, c.d_model);
  const auto mask = HighlightMask(enc.spans, enc.highlights);
  const std::vector<ShiftControl> controls = {
      {"vanilla", ControlDirective::Vanilla()},
      {"identity", ControlDirective::Focus(mask, fv)},
      {"offset", ControlDirective::Offset(mask, 3.0)}};
  for (TargetSource source : {TargetSource::kDecoded, TargetSource::kReference}) {
    const auto report = MakeAttributionShiftReport(m, vocab, ex, controls, source,
                                                   {.beam_width = 2, .max_len = 6});
    ASSERT_EQ(report.rows.size(), controls.size() * 2);
    for (const auto& row : report.rows) EXPECT_EQ(row.scores.size(), 3u);
    for (int k = 0; k < 2; ++k) {
      EXPECT_EQ(report.rows[k].scores, report.rows[2 + k].scores);
      EXPECT_EQ(report.rows[k].method, report.rows[2 + k].method);
    }
    const auto j = report.ToJson();
    EXPECT_EQ(j["rows"].size(), 6u);
    const std::string csv = report.ToCsv();
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 6 * 3);
    EXPECT_FALSE(report.ToText().empty());
  }
  EXPECT_EQ(ParseTargetSource("reference"), TargetSource::kReference);
  EXPECT_EQ(ParseTargetSource("decoded"), TargetSource::kDecoded);
}

}  // namespace
}  // namespace focusvec
