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

// Evaluation metrics and reports.

#ifndef FOCUSVEC_EVALKIT_H_
#define FOCUSVEC_EVALKIT_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "focusvec/attribution.h"
#include "focusvec/corpus.h"
#include "focusvec/model.h"

namespace focusvec {

using DirectiveFn = std::function<ControlDirective(const EncodedExample&)>;

struct NllTotals {
  double nll = 0.0;
  int64_t tokens = 0;

  double MeanNll() const { return tokens == 0 ? 0.0 : nll / static_cast<double>(tokens); }
  double Perplexity() const;
};

// Summed target NLL and token count (eos included) over a dataset.
NllTotals DatasetNll(const Model& model, const std::vector<EncodedExample>& data,
                     const DirectiveFn& directive);
// exp(total NLL / total tokens). Throws ContractError on an empty dataset.
double Perplexity(const Model& model, const std::vector<EncodedExample>& data,
                  const DirectiveFn& directive);

enum class RougeVariant { kRouge1, kRouge2, kRougeL };

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Clipped n-gram overlap (1, 2) or longest common subsequence (L). Sequences
// shorter than n have no n-grams and score 0.
RougeScore Rouge(std::span<const std::string> candidate,
                 std::span<const std::string> reference, RougeVariant variant);
RougeScore Rouge(std::string_view candidate, std::string_view reference,
                 RougeVariant variant);

// Percentage of rankings whose first entry is a gold sentence.
double Top1Precision(std::span<const std::vector<int>> rankings,
                     std::span<const std::vector<int>> gold);

// A proportion with its normal-approximation standard error.
struct BinomialEstimate {
  int64_t successes = 0;
  int64_t trials = 0;

  double value() const;
  double Percentage() const { return 100.0 * value(); }
  double StandardError() const;
  // Wilson score interval at z standard deviations.
  std::pair<double, double> Wilson(double z = 1.96) const;
  // |value - p| <= z * sqrt(p (1 - p) / trials).
  bool WithinNoiseOf(double p, double z = 3.0) const;
  nlohmann::json ToJson() const;
};

// The expected output for an example: the rendering of its highlighted fact
// sentences, in order. Throws ContractError if the example is not from the
// synthetic fact task.
std::string ExpectedRendering(const Example& example);

// Fraction of generations exactly equal to ExpectedRendering.
BinomialEstimate SteeringAccuracy(std::span<const std::string> generations,
                                  const Dataset& examples);

enum class TargetSource { kDecoded, kReference };
TargetSource ParseTargetSource(std::string_view name);

struct ShiftControl {
  std::string name;
  ControlDirective directive;
};

struct ShiftRow {
  std::string control;
  AttributionMethod method;
  std::string target;
  std::vector<double> scores;
};

// Per-sentence attention-weight and grad-norm scores under several controls.
struct AttributionShiftReport {
  std::string example_id;
  std::vector<std::string> sentences;
  std::vector<int> highlights;
  TargetSource target_source = TargetSource::kDecoded;
  std::vector<ShiftRow> rows;

  nlohmann::json ToJson() const;
  std::string ToText() const;
  // Long format: control,method,sentence,score.
  std::string ToCsv() const;
};

AttributionShiftReport MakeAttributionShiftReport(
    const Model& model, const Vocab& vocab, const Example& example,
    std::span<const ShiftControl> controls, TargetSource target_source,
    const DecodeOptions& decode = {});

}  // namespace focusvec

#endif  // FOCUSVEC_EVALKIT_H_
