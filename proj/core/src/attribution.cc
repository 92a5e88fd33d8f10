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
#include <chrono>
#include <cmath>
#include <numeric>

#include "focusvec/errors.h"
#include "focusvec/random.h"

namespace focusvec {
namespace {

std::vector<int> DecoderInput(std::span<const int> target, int bos) {
  std::vector<int> in = {bos};
  in.insert(in.end(), target.begin(), target.end() - 1);
  return in;
}

void CheckSpan(const SentenceSpan& span, size_t n) {
  if (span.begin < 0 || span.end < span.begin || span.end > static_cast<int>(n)) {
    throw ContractError("attribution span [" + std::to_string(span.begin) + ", " +
                        std::to_string(span.end) + ") is outside a source of " +
                        std::to_string(n) + " tokens");
  }
}

void CheckTarget(const Model& model, std::span<const int> target) {
  if (target.empty() || target.back() != model.config().eos_id) {
    throw ContractError("attribution target must be nonempty and end with eos");
  }
}

std::vector<double> LooScores(const Model& model, std::span<const int> source,
                              std::span<const SentenceSpan> spans,
                              std::span<const int> target,
                              const ControlDirective& directive) {
  const double base = model.SequenceNll(source, target, directive);
  std::vector<double> scores;
  scores.reserve(spans.size());
  std::vector<int> padded(source.begin(), source.end());
  for (const SentenceSpan& span : spans) {
    if (span.begin == span.end) {
      scores.push_back(0.0);
      continue;
    }
    for (int i = span.begin; i < span.end; ++i) padded[i] = model.config().pad_id;
    scores.push_back(model.SequenceNll(padded, target, directive) - base);
    for (int i = span.begin; i < span.end; ++i) padded[i] = source[i];
  }
  return scores;
}

std::vector<double> AttentionScores(const Model& model, std::span<const int> source,
                                    std::span<const SentenceSpan> spans,
                                    std::span<const int> target,
                                    const ControlDirective& directive) {
  Tape tape;
  EncoderOutput enc = model.Encode(tape, source, directive);
  DecoderOutput out =
      model.Decode(tape, enc, DecoderInput(target, model.config().bos_id), directive);
  // Column sums of every recorded [target, source] weight matrix.
  std::vector<double> per_token(source.size(), 0.0);
  for (const Tensor& w : out.cross_attention.weights) {
    for (int64_t j = 0; j < w.rows(); ++j) {
      for (int64_t i = 0; i < w.cols(); ++i) per_token[i] += w.at(j, i);
    }
  }
  std::vector<double> scores;
  for (const SentenceSpan& span : spans) {
    double s = 0.0;
    for (int i = span.begin; i < span.end; ++i) s += per_token[i];
    scores.push_back(s);
  }
  return scores;
}

std::vector<double> GradientScores(const Model& model, std::span<const int> source,
                                   std::span<const SentenceSpan> spans,
                                   std::span<const int> target,
                                   const ControlDirective& directive, bool times_input) {
  const InputGradient ig = LogProbInputGradient(model, source, target, directive);
  const int64_t d = ig.embeddings.cols();
  std::vector<double> scores;
  for (const SentenceSpan& span : spans) {
    double s = 0.0;
    for (int i = span.begin; i < span.end; ++i) {
      double acc = 0.0;
      for (int64_t k = 0; k < d; ++k) {
        const double g = ig.gradient.at(i, k);
        acc += times_input ? g * ig.embeddings.at(i, k) : g * g;
      }
      s += times_input ? acc : std::sqrt(acc);
    }
    scores.push_back(s);
  }
  return scores;
}

double SingleSpan(const Model& model, std::span<const int> source,
                  std::span<const int> target, const SentenceSpan& span,
                  AttributionMethod method, const ControlDirective& directive) {
  CheckSpan(span, source.size());
  return ScoreSentences(model, source, std::span<const SentenceSpan>(&span, 1), target,
                        method, directive)[0];
}

}  // namespace

std::string_view AttributionMethodName(AttributionMethod method) {
  switch (method) {
    case AttributionMethod::kLoo:
      return "loo";
    case AttributionMethod::kAttentionWeight:
      return "attn";
    case AttributionMethod::kGradNorm:
      return "gradnorm";
    case AttributionMethod::kGradInput:
      return "gradinput";
  }
  return "loo";
}

AttributionMethod ParseAttributionMethod(std::string_view name) {
  if (name == "loo" || name == "leave-one-out") return AttributionMethod::kLoo;
  if (name == "attn" || name == "attention-weight") return AttributionMethod::kAttentionWeight;
  if (name == "gradnorm" || name == "grad-norm") return AttributionMethod::kGradNorm;
  if (name == "gradinput" || name == "grad-input") return AttributionMethod::kGradInput;
  throw ContractError("unknown attribution method '" + std::string(name) +
                      "' (valid: loo, attn, gradnorm, gradinput)");
}

double LooScore(const Model& model, std::span<const int> source,
                std::span<const int> target, const SentenceSpan& span,
                const ControlDirective& directive) {
  return SingleSpan(model, source, target, span, AttributionMethod::kLoo, directive);
}

double AttentionWeightScore(const Model& model, std::span<const int> source,
                            std::span<const int> target, const SentenceSpan& span,
                            const ControlDirective& directive) {
  return SingleSpan(model, source, target, span, AttributionMethod::kAttentionWeight,
                    directive);
}

double GradNormScore(const Model& model, std::span<const int> source,
                     std::span<const int> target, const SentenceSpan& span,
                     const ControlDirective& directive) {
  return SingleSpan(model, source, target, span, AttributionMethod::kGradNorm, directive);
}

double GradInputScore(const Model& model, std::span<const int> source,
                      std::span<const int> target, const SentenceSpan& span,
                      const ControlDirective& directive) {
  return SingleSpan(model, source, target, span, AttributionMethod::kGradInput, directive);
}

InputGradient LogProbInputGradient(const Model& model, std::span<const int> source,
                                   std::span<const int> target,
                                   const ControlDirective& directive) {
  CheckTarget(model, target);
  model.CheckDirective(directive, static_cast<int>(source.size()));
  std::vector<int> tokens(source.begin(), source.end());
  ControlDirective effective = directive;
  if (directive.mode == ControlMode::kPadding) {
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (!directive.highlight[i]) tokens[i] = model.config().pad_id;
    }
    effective = ControlDirective::Vanilla();
  }
  Tensor h0;
  {
    Tape embed_tape;
    h0 = model.EmbedSource(embed_tape, tokens).value();
  }
  Tape tape;
  Var x = tape.Input(h0, true);
  EncoderOutput enc = model.EncodeEmbedded(tape, x, effective);
  Var nll = model.SequenceNllEncoded(tape, enc, target, effective);
  // d log P = -d NLL.
  tape.Backward(Scale(nll, -1.0));
  return {std::move(h0), tape.Grad(x)};
}

std::vector<double> ScoreSentences(const Model& model, std::span<const int> source,
                                   std::span<const SentenceSpan> spans,
                                   std::span<const int> target, AttributionMethod method,
                                   const ControlDirective& directive) {
  CheckTarget(model, target);
  for (const SentenceSpan& span : spans) CheckSpan(span, source.size());
  switch (method) {
    case AttributionMethod::kLoo:
      return LooScores(model, source, spans, target, directive);
    case AttributionMethod::kAttentionWeight:
      return AttentionScores(model, source, spans, target, directive);
    case AttributionMethod::kGradNorm:
      return GradientScores(model, source, spans, target, directive, false);
    case AttributionMethod::kGradInput:
      return GradientScores(model, source, spans, target, directive, true);
  }
  throw ContractError("unknown attribution method");
}

std::vector<int> RankScores(std::span<const double> scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

const MethodAttribution& AttributionReport::Get(AttributionMethod method) const {
  for (const auto& m : methods) {
    if (m.method == method) return m;
  }
  throw ContractError("attribution report has no '" +
                      std::string(AttributionMethodName(method)) + "' scores");
}

nlohmann::json AttributionReport::ToJson() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& m : methods) {
    out[std::string(AttributionMethodName(m.method))] = {
        {"scores", m.scores}, {"ranking", m.ranking}, {"elapsed_ms", m.elapsed_ms}};
  }
  return out;
}

AttributionReport RankSentences(const Model& model, std::span<const int> source,
                                std::span<const SentenceSpan> spans,
                                std::span<const int> target,
                                std::span<const AttributionMethod> methods,
                                const ControlDirective& directive) {
  if (spans.empty()) throw ContractError("rank_sentences: input has no sentences");
  AttributionReport report;
  for (AttributionMethod method : methods) {
    const auto t0 = std::chrono::steady_clock::now();
    MethodAttribution m{method, ScoreSentences(model, source, spans, target, method, directive),
                        {}, 0.0};
    m.ranking = RankScores(m.scores);
    m.elapsed_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
    report.methods.push_back(std::move(m));
  }
  return report;
}

nlohmann::json Annotation::ToJson() const {
  return {{"id", example.id},
          {"input_sentences", example.input_sentences},
          {"target", example.target},
          {"highlights", example.highlights.value_or(std::vector<int>{})},
          {"method", AttributionMethodName(method)},
          {"k", k},
          {"scores", scores}};
}

int DrawK(const AnnotateOptions& options, std::string_view example_id) {
  if (options.k_min < 1 || options.k_max < options.k_min) {
    throw ContractError("annotate: need 1 <= k_min <= k_max");
  }
  Rng rng(KeyedRandom(options.seed, example_id));
  return options.k_min + rng.UniformInt(options.k_max - options.k_min + 1);
}

std::vector<Annotation> AnnotateTopK(const Model& model, const Vocab& vocab,
                                     const Dataset& dataset,
                                     const AnnotateOptions& options) {
  if (dataset.empty()) throw ContractError("annotate: empty dataset");
  std::vector<Annotation> out;
  out.reserve(dataset.size());
  for (const Example& example : dataset) {
    const EncodedExample enc = EncodeExample(example, vocab);
    Annotation a;
    a.method = options.method;
    a.scores = ScoreSentences(model, enc.source, enc.spans, enc.target, options.method);
    const auto ranking = RankScores(a.scores);
    a.k = std::min<int>(DrawK(options, example.id), static_cast<int>(ranking.size()));
    std::vector<int> top(ranking.begin(), ranking.begin() + a.k);
    std::sort(top.begin(), top.end());
    a.example = example;
    a.example.highlights = std::move(top);
    out.push_back(std::move(a));
  }
  return out;
}

std::string FormatAnnotations(std::span<const Annotation> annotations) {
  std::string out;
  for (const auto& a : annotations) {
    out += a.ToJson().dump();
    out += '\n';
  }
  return out;
}

}  // namespace focusvec
