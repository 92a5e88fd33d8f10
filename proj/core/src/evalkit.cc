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
#include <cstdio>
#include <map>
#include <sstream>

#include "focusvec/errors.h"

namespace focusvec {
namespace {

RougeScore FromCounts(double overlap, double candidate_total, double reference_total) {
  RougeScore r;
  r.precision = candidate_total > 0 ? overlap / candidate_total : 0.0;
  r.recall = reference_total > 0 ? overlap / reference_total : 0.0;
  r.f1 = r.precision + r.recall > 0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

std::map<std::vector<std::string>, int> NGrams(std::span<const std::string> tokens, int n) {
  std::map<std::vector<std::string>, int> counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

size_t Lcs(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string Fixed(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

}  // namespace

double NllTotals::Perplexity() const { return std::exp(MeanNll()); }

NllTotals DatasetNll(const Model& model, const std::vector<EncodedExample>& data,
                     const DirectiveFn& directive) {
  NllTotals totals;
  for (const auto& ex : data) {
    totals.nll += model.SequenceNll(ex.source, ex.target, directive(ex));
    totals.tokens += static_cast<int64_t>(ex.target.size());
  }
  return totals;
}

double Perplexity(const Model& model, const std::vector<EncodedExample>& data,
                  const DirectiveFn& directive) {
  if (data.empty()) throw ContractError("perplexity: empty dataset");
  return DatasetNll(model, data, directive).Perplexity();
}

RougeScore Rouge(std::span<const std::string> candidate,
                 std::span<const std::string> reference, RougeVariant variant) {
  if (variant == RougeVariant::kRougeL) {
    return FromCounts(static_cast<double>(Lcs(candidate, reference)),
                      static_cast<double>(candidate.size()),
                      static_cast<double>(reference.size()));
  }
  const int n = variant == RougeVariant::kRouge1 ? 1 : 2;
  const auto cand = NGrams(candidate, n);
  const auto ref = NGrams(reference, n);
  double overlap = 0.0, cand_total = 0.0, ref_total = 0.0;
  for (const auto& [gram, c] : cand) {
    cand_total += c;
    const auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [gram, c] : ref) ref_total += c;
  return FromCounts(overlap, cand_total, ref_total);
}

RougeScore Rouge(std::string_view candidate, std::string_view reference,
                 RougeVariant variant) {
  const auto c = Tokenize(candidate);
  const auto r = Tokenize(reference);
  return Rouge(std::span<const std::string>(c), std::span<const std::string>(r), variant);
}

double Top1Precision(std::span<const std::vector<int>> rankings,
                     std::span<const std::vector<int>> gold) {
  if (rankings.size() != gold.size()) {
    throw ContractError("top1_precision: " + std::to_string(rankings.size()) +
                        " rankings for " + std::to_string(gold.size()) + " gold sets");
  }
  if (rankings.empty()) throw ContractError("top1_precision: no examples");
  int64_t hits = 0;
  for (size_t i = 0; i < rankings.size(); ++i) {
    if (gold[i].empty()) {
      throw ContractError("top1_precision: example " + std::to_string(i) + " has no gold");
    }
    if (rankings[i].empty()) {
      throw ContractError("top1_precision: example " + std::to_string(i) +
                          " has an empty ranking");
    }
    if (std::find(gold[i].begin(), gold[i].end(), rankings[i][0]) != gold[i].end()) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double BinomialEstimate::value() const {
  return trials == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(trials);
}

double BinomialEstimate::StandardError() const {
  if (trials == 0) return 0.0;
  const double p = value();
  return std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

std::pair<double, double> BinomialEstimate::Wilson(double z) const {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = value();
  const double denom = 1.0 + z * z / n;
  const double centre = (p + z * z / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

bool BinomialEstimate::WithinNoiseOf(double p, double z) const {
  if (trials == 0) return false;
  return std::abs(value() - p) <= z * std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

nlohmann::json BinomialEstimate::ToJson() const {
  const auto [lo, hi] = Wilson();
  return {{"successes", successes}, {"trials", trials},       {"value", value()},
          {"stderr", StandardError()}, {"wilson95", {lo, hi}}};
}

std::string ExpectedRendering(const Example& example) {
  if (!example.highlights || example.highlights->empty()) {
    throw ContractError("steering_accuracy: example '" + example.id +
                        "' has no gold highlights");
  }
  std::string out;
  for (int h : *example.highlights) {
    if (h < 0 || h >= static_cast<int>(example.input_sentences.size())) {
      throw ContractError("steering_accuracy: example '" + example.id +
                          "' has an out-of-range highlight");
    }
    const auto rendered = RenderFact(example.input_sentences[h]);
    if (!rendered) {
      throw ContractError("steering_accuracy: example '" + example.id +
                          "' is not from the synthetic fact task (sentence " +
                          std::to_string(h) + " is not a fact)");
    }
    if (!out.empty()) out += ' ';
    out += *rendered;
  }
  return out;
}

BinomialEstimate SteeringAccuracy(std::span<const std::string> generations,
                                  const Dataset& examples) {
  if (generations.size() != examples.size()) {
    throw ContractError("steering_accuracy: " + std::to_string(generations.size()) +
                        " generations for " + std::to_string(examples.size()) + " examples");
  }
  BinomialEstimate est;
  for (size_t i = 0; i < examples.size(); ++i) {
    const std::string expected = ExpectedRendering(examples[i]);
    const auto tokens = Tokenize(generations[i]);
    est.successes += JoinTokens(tokens) == expected ? 1 : 0;
    est.trials += 1;
  }
  return est;
}

TargetSource ParseTargetSource(std::string_view name) {
  if (name == "decoded") return TargetSource::kDecoded;
  if (name == "reference") return TargetSource::kReference;
  throw ContractError("unknown target source '" + std::string(name) +
                      "' (expected decoded or reference)");
}

nlohmann::json AttributionShiftReport::ToJson() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"control", r.control},
                         {"method", AttributionMethodName(r.method)},
                         {"target", r.target},
                         {"scores", r.scores}});
  }
  return {{"example_id", example_id},
          {"sentences", sentences},
          {"highlights", highlights},
          {"target_source", target_source == TargetSource::kDecoded ? "decoded" : "reference"},
          {"rows", rows_json}};
}

std::string AttributionShiftReport::ToText() const {
  size_t control_width = 7;
  for (const auto& r : rows) control_width = std::max(control_width, r.control.size());
  std::ostringstream out;
  auto pad = [](std::string s, size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  out << pad("control", control_width) << "  " << pad("method", 9);
  for (size_t i = 0; i < sentences.size(); ++i) out << "  " << pad("s" + std::to_string(i), 10);
  out << "\n";
  for (const auto& r : rows) {
    out << pad(r.control, control_width) << "  "
        << pad(std::string(AttributionMethodName(r.method)), 9);
    for (double s : r.scores) out << "  " << pad(Fixed(s, 6), 10);
    out << "\n";
  }
  return out.str();
}

std::string AttributionShiftReport::ToCsv() const {
  std::ostringstream out;
  out << "control,method,sentence,score\n";
  for (const auto& r : rows) {
    for (size_t i = 0; i < r.scores.size(); ++i) {
      out << r.control << ',' << AttributionMethodName(r.method) << ',' << i << ','
          << Fixed(r.scores[i], 12) << "\n";
    }
  }
  return out.str();
}

AttributionShiftReport MakeAttributionShiftReport(const Model& model, const Vocab& vocab,
                                                  const Example& example,
                                                  std::span<const ShiftControl> controls,
                                                  TargetSource target_source,
                                                  const DecodeOptions& decode) {
  const EncodedExample enc = EncodeExample(example, vocab);
  AttributionShiftReport report;
  report.example_id = example.id;
  report.sentences = example.input_sentences;
  report.highlights = enc.highlights;
  report.target_source = target_source;
  for (const ShiftControl& control : controls) {
    std::vector<int> target = enc.target;
    if (target_source == TargetSource::kDecoded) {
      target = model.BeamSearch(enc.source, control.directive, decode);
      target.push_back(model.config().eos_id);
    }
    const std::string text = vocab.Decode(target);
    for (AttributionMethod method :
         {AttributionMethod::kAttentionWeight, AttributionMethod::kGradNorm}) {
      report.rows.push_back({control.name, method, text,
                             ScoreSentences(model, enc.source, enc.spans, target, method,
                                            control.directive)});
    }
  }
  return report;
}

}  // namespace focusvec
