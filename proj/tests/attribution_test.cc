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

#include "focusvec/attribution.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "focusvec/errors.h"
#include "test_util.h"

namespace focusvec {
namespace {

using testing::RandomExample;
using testing::TinyConfig;

TEST(AttributionNamesTest, RoundTripAndAliases) {
  for (AttributionMethod m : kAllAttributionMethods) {
    EXPECT_EQ(ParseAttributionMethod(AttributionMethodName(m)), m);
  }
  EXPECT_EQ(ParseAttributionMethod("leave-one-out"), AttributionMethod::kLoo);
  EXPECT_EQ(ParseAttributionMethod("attention-weight"), AttributionMethod::kAttentionWeight);
  EXPECT_EQ(ParseAttributionMethod("grad-norm"), AttributionMethod::kGradNorm);
  EXPECT_EQ(ParseAttributionMethod("grad-input"), AttributionMethod::kGradInput);
  EXPECT_THROW(ParseAttributionMethod("shap"), ContractError);
}

TEST(AttentionWeightTest, UniformAttentionHandCase) {
  ModelConfig c = TinyConfig();
  c.heads = 1;
  c.decoder_layers = 1;
  const Model m(c);  // zero weights: uniform attention
  const std::vector<int> source = {5, 6, 7, 8};
  const std::vector<int> target = {kEosId};
  EXPECT_NEAR(AttentionWeightScore(m, source, target, {0, 0, 2}), 0.5, 1e-15);
}

TEST(AttentionWeightTest, FullCoverSumsToPositionsHeadsLayers) {
  const ModelConfig c = TinyConfig();
  const Model m = Model::Initialize(c, 3);
  Rng rng(4);
  for (int k = 0; k < 5; ++k) {
    const auto ex = RandomExample(rng, c.vocab_size);
    const auto scores = ScoreSentences(m, ex.source, ex.spans, ex.target,
                                       AttributionMethod::kAttentionWeight);
    double total = 0;
    for (double s : scores) total += s;
    EXPECT_NEAR(total, static_cast<double>(ex.target.size() * c.heads * c.decoder_layers),
                1e-9);
  }
}

TEST(AttributionTest, AdditiveOverDisjointSpans) {
  const ModelConfig c = TinyConfig();
  const Model m = Model::Initialize(c, 5);
  Rng rng(6);
  const auto ex = RandomExample(rng, c.vocab_size);
  const int n = static_cast<int>(ex.source.size());
  const int mid = n / 2;
  const SentenceSpan a{0, 0, mid}, b{1, mid, n}, all{0, 0, n};
  using Fn = double (*)(const Model&, std::span<const int>, std::span<const int>,
                        const SentenceSpan&, const ControlDirective&);
  for (Fn fn : {static_cast<Fn>(AttentionWeightScore), static_cast<Fn>(GradNormScore),
                static_cast<Fn>(GradInputScore)}) {
    const auto d = ControlDirective::Vanilla();
    const double sa = fn(m, ex.source, ex.target, a, d);
    const double sb = fn(m, ex.source, ex.target, b, d);
    const double sall = fn(m, ex.source, ex.target, all, d);
    EXPECT_NEAR(sa + sb, sall, 1e-9 * std::max(1.0, std::abs(sall)));
  }
}

TEST(LooTest, MatchesIndependentPaddedLikelihood) {
  const ModelConfig c = TinyConfig();
  const Model m = Model::Initialize(c, 7);
  Rng rng(8);
  for (int k = 0; k < 5; ++k) {
    const auto ex = RandomExample(rng, c.vocab_size);
    for (const auto& span : ex.spans) {
      std::vector<int> padded = ex.source;
      for (int i = span.begin; i < span.end; ++i) padded[i] = c.pad_id;
      const double expected =
          m.SequenceNll(padded, ex.target, ControlDirective::Vanilla()) -
          m.SequenceNll(ex.source, ex.target, ControlDirective::Vanilla());
      EXPECT_NEAR(LooScore(m, ex.source, ex.target, span), expected, 1e-12);
    }
  }
}

TEST(InputGradientTest, MatchesFiniteDifferences) {
  const ModelConfig c = TinyConfig();
  const Model m = Model::Initialize(c, 9);
  Rng rng(10);
  const auto ex = RandomExample(rng, c.vocab_size);
  const auto g = LogProbInputGradient(m, ex.source, ex.target, ControlDirective::Vanilla());
  auto logp = [&](const Tensor& h0) {
    Tape tape;
    const auto enc = m.EncodeEmbedded(tape, tape.Constant(h0), ControlDirective::Vanilla());
    return -m.SequenceNllEncoded(tape, enc, ex.target, ControlDirective::Vanilla())
                .value()
                .item();
  };
  const Tensor numeric = FiniteDiffGrad(logp, g.embeddings, 1e-5);
  double diff = 0, norm = 0;
  for (int64_t i = 0; i < numeric.size(); ++i) {
    diff += (numeric[i] - g.gradient[i]) * (numeric[i] - g.gradient[i]);
    norm += numeric[i] * numeric[i];
  }
  EXPECT_LT(std::sqrt(diff / norm), 1e-6);
}

TEST(GradScoresTest, DefinitionsFromInputGradient) {
  const ModelConfig c = TinyConfig();
  const Model m = Model::Initialize(c, 11);
  Rng rng(12);
  const auto ex = RandomExample(rng, c.vocab_size);
  const auto g = LogProbInputGradient(m, ex.source, ex.target, ControlDirective::Vanilla());
  const auto& span = ex.spans[0];
  double norm_sum = 0, dot_sum = 0;
  for (int i = span.begin; i < span.end; ++i) {
    double sq = 0;
    for (int j = 0; j < c.d_model; ++j) {
      sq += g.gradient.at(i, j) * g.gradient.at(i, j);
      dot_sum += g.gradient.at(i, j) * g.embeddings.at(i, j);
    }
    norm_sum += std::sqrt(sq);
  }
  EXPECT_NEAR(GradNormScore(m, ex.source, ex.target, span), norm_sum, 1e-12);
  EXPECT_NEAR(GradInputScore(m, ex.source, ex.target, span), dot_sum, 1e-12);
}

TEST(GradInputTest, ZeroEmbeddingsScoreZero) {
  const ModelConfig c = TinyConfig();
  Model m = Model::Initialize(c, 13);
  const std::vector<int> source = {5, 6, 4, 7, 8, 4};
  const std::vector<int> target = {9, kEosId};
  // Zero the token rows and position rows of the first sentence.
  for (auto& [name, t] : m.NamedParameters()) {
    if (name == "embed.token") {
      for (int tok : {5, 6, 4}) {
        for (int j = 0; j < c.d_model; ++j) t->at(tok, j) = 0.0;
      }
    }
    if (name == "embed.source_position") {
      for (int p = 0; p < 3; ++p) {
        for (int j = 0; j < c.d_model; ++j) t->at(p, j) = 0.0;
      }
    }
  }
  // Token 4 also appears in the second sentence; only positions 0..2 matter.
  EXPECT_EQ(GradInputScore(m, source, target, {0, 0, 3}), 0.0);
}

TEST(ScoreSentencesTest, MatchesPerSpanScores) {
  const ModelConfig c = TinyConfig();
  const Model m = Model::Initialize(c, 14);
  Rng rng(15);
  const auto ex = RandomExample(rng, c.vocab_size);
  const auto d = ControlDirective::Offset(HighlightMask(ex.spans, std::vector<int>{0}), 1.5);
  for (AttributionMethod method : kAllAttributionMethods) {
    const auto scores = ScoreSentences(m, ex.source, ex.spans, ex.target, method, d);
    ASSERT_EQ(scores.size(), ex.spans.size());
    for (size_t s = 0; s < ex.spans.size(); ++s) {
      double single = 0;
      switch (method) {
        case AttributionMethod::kLoo:
          single = LooScore(m, ex.source, ex.target, ex.spans[s], d);
          break;
        case AttributionMethod::kAttentionWeight:
          single = AttentionWeightScore(m, ex.source, ex.target, ex.spans[s], d);
          break;
        case AttributionMethod::kGradNorm:
          single = GradNormScore(m, ex.source, ex.target, ex.spans[s], d);
          break;
        case AttributionMethod::kGradInput:
          single = GradInputScore(m, ex.source, ex.target, ex.spans[s], d);
          break;
      }
      EXPECT_NEAR(scores[s], single, 1e-10);
    }
  }
}

TEST(RankScoresTest, DescendingWithStableTies) {
  const std::vector<double> scores = {0.1, 0.5, 0.5, -1.0, 0.7};
  EXPECT_EQ(RankScores(scores), (std::vector<int>{4, 1, 2, 0, 3}));
}

TEST(RankSentencesTest, ReportCarriesEveryMethod) {
  const ModelConfig c = TinyConfig();
  const Model m = Model::Initialize(c, 16);
  Rng rng(17);
  const auto ex = RandomExample(rng, c.vocab_size);
  const auto report = RankSentences(m, ex.source, ex.spans, ex.target, kAllAttributionMethods);
  ASSERT_EQ(report.methods.size(), 4u);
  for (AttributionMethod method : kAllAttributionMethods) {
    const auto& r = report.Get(method);
    EXPECT_EQ(r.ranking, RankScores(r.scores));
    EXPECT_GE(r.elapsed_ms, 0.0);
  }
  const auto j = report.ToJson();
  EXPECT_TRUE(j.contains("loo"));
  EXPECT_TRUE(j["gradinput"].contains("ranking"));
  const std::vector<AttributionMethod> only_loo = {AttributionMethod::kLoo};
  EXPECT_THROW(
      RankSentences(m, ex.source, ex.spans, ex.target, only_loo).Get(AttributionMethod::kGradNorm),
      ContractError);
}

Dataset SmallSynth(int n) {
  SynthOptions o;
  o.n_examples = n;
  o.seed = 3;
  return SynthGenerate(o);
}

TEST(AnnotateTest, DrawKIsKeyedAndInRange) {
  AnnotateOptions o;
  o.k_min = 1;
  o.k_max = 3;
  std::vector<int> seen(4, 0);
  for (int i = 0; i < 200; ++i) {
    const std::string id = "ex-" + std::to_string(i);
    const int k = DrawK(o, id);
    ASSERT_GE(k, 1);
    ASSERT_LE(k, 3);
    EXPECT_EQ(k, DrawK(o, id));
    ++seen[k];
  }
  EXPECT_GT(seen[1], 0);
  EXPECT_GT(seen[2], 0);
  EXPECT_GT(seen[3], 0);
}

TEST(AnnotateTest, TopKHighlightsSortedBestSentences) {
  const Dataset data = SmallSynth(6);
  const Vocab vocab = Vocab::Build(CorpusTexts(data));
  const Model m = Model::Initialize(TinyConfig(vocab.size()), 18);
  AnnotateOptions o;
  o.method = AttributionMethod::kAttentionWeight;
  o.k_min = 2;
  o.k_max = 2;
  const auto ann = AnnotateTopK(m, vocab, data, o);
  ASSERT_EQ(ann.size(), data.size());
  for (size_t i = 0; i < ann.size(); ++i) {
    const auto& a = ann[i];
    EXPECT_EQ(a.k, 2);
    ASSERT_TRUE(a.example.highlights.has_value());
    const auto& h = *a.example.highlights;
    ASSERT_EQ(h.size(), 2u);
    EXPECT_LT(h[0], h[1]);
    const auto ranking = RankScores(a.scores);
    std::vector<int> top = {ranking[0], ranking[1]};
    std::sort(top.begin(), top.end());
    EXPECT_EQ(h, top);
    EXPECT_EQ(a.example.input_sentences, data[i].input_sentences);
    const auto j = a.ToJson();
    for (const char* key : {"id", "input_sentences", "target", "highlights", "method", "k",
                            "scores"}) {
      EXPECT_TRUE(j.contains(key)) << key;
    }
  }
  // Annotations load back as a dataset.
  const Dataset back = ParseJsonl(FormatAnnotations(ann));
  ASSERT_EQ(back.size(), ann.size());
  EXPECT_EQ(back[0].highlights, ann[0].example.highlights);
}

TEST(AnnotateTest, KIsClampedToSentenceCount) {
  const Dataset data = SmallSynth(2);
  const Vocab vocab = Vocab::Build(CorpusTexts(data));
  const Model m = Model::Initialize(TinyConfig(vocab.size()), 19);
  AnnotateOptions o;
  o.method = AttributionMethod::kAttentionWeight;
  o.k_min = 9;
  o.k_max = 9;
  for (const auto& a : AnnotateTopK(m, vocab, data, o)) {
    EXPECT_EQ(a.k, static_cast<int>(a.example.input_sentences.size()));
  }
  o.k_min = 3;
  o.k_max = 2;
  EXPECT_THROW(AnnotateTopK(m, vocab, data, o), ContractError);
}

}  // namespace
}  // namespace focusvec
