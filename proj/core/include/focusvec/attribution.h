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

// Sentence-level attribution of a target sequence to input sentences.
//
// All scores refer to the summed log-probability log P(y | x) of a
// teacher-forced target under an optional control directive:
//   loo        log P(y | x) - log P(y | x with the sentence replaced by <pad>)
//   attn       cross-attention mass on the sentence, summed over target
//              positions, heads and decoder layers
//   gradnorm   sum over sentence tokens of |d log P / d h0_i|
//   gradinput  sum over sentence tokens of (d log P / d h0_i) . h0_i

#ifndef FOCUSVEC_ATTRIBUTION_H_
#define FOCUSVEC_ATTRIBUTION_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "focusvec/corpus.h"
#include "focusvec/model.h"

namespace focusvec {

enum class AttributionMethod { kLoo, kAttentionWeight, kGradNorm, kGradInput };

inline constexpr AttributionMethod kAllAttributionMethods[] = {
    AttributionMethod::kLoo, AttributionMethod::kAttentionWeight,
    AttributionMethod::kGradNorm, AttributionMethod::kGradInput};

// loo, attn, gradnorm, gradinput.
std::string_view AttributionMethodName(AttributionMethod method);
// Also accepts leave-one-out, attention-weight, grad-norm, grad-input.
AttributionMethod ParseAttributionMethod(std::string_view name);

// Scores of a single token span [begin, end). `target` ends with eos.
double LooScore(const Model& model, std::span<const int> source,
                std::span<const int> target, const SentenceSpan& span,
                const ControlDirective& directive = ControlDirective::Vanilla());
double AttentionWeightScore(const Model& model, std::span<const int> source,
                            std::span<const int> target, const SentenceSpan& span,
                            const ControlDirective& directive = ControlDirective::Vanilla());
double GradNormScore(const Model& model, std::span<const int> source,
                     std::span<const int> target, const SentenceSpan& span,
                     const ControlDirective& directive = ControlDirective::Vanilla());
double GradInputScore(const Model& model, std::span<const int> source,
                      std::span<const int> target, const SentenceSpan& span,
                      const ControlDirective& directive = ControlDirective::Vanilla());

// Gradient of log P(y | x) with respect to the input embeddings h0 [n, d],
// together with h0 itself.
struct InputGradient {
  Tensor embeddings;
  Tensor gradient;
};
InputGradient LogProbInputGradient(const Model& model, std::span<const int> source,
                                   std::span<const int> target,
                                   const ControlDirective& directive);

// One score per span, sharing the forward and backward passes across spans.
std::vector<double> ScoreSentences(const Model& model, std::span<const int> source,
                                   std::span<const SentenceSpan> spans,
                                   std::span<const int> target, AttributionMethod method,
                                   const ControlDirective& directive = ControlDirective::Vanilla());

// Descending order; equal scores keep the lower index first.
std::vector<int> RankScores(std::span<const double> scores);

struct MethodAttribution {
  AttributionMethod method;
  std::vector<double> scores;
  std::vector<int> ranking;
  double elapsed_ms = 0.0;
};

struct AttributionReport {
  std::vector<MethodAttribution> methods;

  const MethodAttribution& Get(AttributionMethod method) const;
  nlohmann::json ToJson() const;
};

AttributionReport RankSentences(const Model& model, std::span<const int> source,
                                std::span<const SentenceSpan> spans,
                                std::span<const int> target,
                                std::span<const AttributionMethod> methods,
                                const ControlDirective& directive = ControlDirective::Vanilla());

struct AnnotateOptions {
  AttributionMethod method = AttributionMethod::kLoo;
  int k_min = 1;
  int k_max = 1;
  uint64_t seed = 1;
};

struct Annotation {
  // The source example with `highlights` replaced by the top-k sentences.
  Example example;
  AttributionMethod method = AttributionMethod::kLoo;
  int k = 0;
  std::vector<double> scores;

  nlohmann::json ToJson() const;
};

// Draws k uniformly from [k_min, k_max] with a generator keyed by the seed
// and the example id, clamps it to the sentence count and highlights the k
// best-ranked sentences.
int DrawK(const AnnotateOptions& options, std::string_view example_id);
std::vector<Annotation> AnnotateTopK(const Model& model, const Vocab& vocab,
                                     const Dataset& dataset,
                                     const AnnotateOptions& options);
// One JSON object per line with the fields of Annotation::ToJson.
std::string FormatAnnotations(std::span<const Annotation> annotations);

}  // namespace focusvec

#endif  // FOCUSVEC_ATTRIBUTION_H_
