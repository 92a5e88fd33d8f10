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

#include "focusvec/model.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <numbers>

#include "focusvec/checkpoint.h"
#include "focusvec/errors.h"
#include "focusvec/random.h"

namespace focusvec {
namespace {

void InitAttention(AttentionParams& p, int d) {
  for (Tensor* w : {&p.wq, &p.wk, &p.wv, &p.wo}) *w = Tensor(Shape{d, d}, 0.0);
  for (Tensor* b : {&p.bq, &p.bk, &p.bv, &p.bo}) *b = Tensor(Shape{d}, 0.0);
}

void InitFeedForward(FeedForwardParams& p, int d, int d_ff) {
  p.w1 = Tensor(Shape{d, d_ff}, 0.0);
  p.b1 = Tensor(Shape{d_ff}, 0.0);
  p.w2 = Tensor(Shape{d_ff, d}, 0.0);
  p.b2 = Tensor(Shape{d}, 0.0);
}

void AddAttention(std::vector<std::pair<std::string, Tensor*>>& out,
                  const std::string& prefix, AttentionParams& p) {
  out.emplace_back(prefix + ".wq", &p.wq);
  out.emplace_back(prefix + ".bq", &p.bq);
  out.emplace_back(prefix + ".wk", &p.wk);
  out.emplace_back(prefix + ".bk", &p.bk);
  out.emplace_back(prefix + ".wv", &p.wv);
  out.emplace_back(prefix + ".bv", &p.bv);
  out.emplace_back(prefix + ".wo", &p.wo);
  out.emplace_back(prefix + ".bo", &p.bo);
}

void AddFeedForward(std::vector<std::pair<std::string, Tensor*>>& out,
                    const std::string& prefix, FeedForwardParams& p) {
  out.emplace_back(prefix + ".w1", &p.w1);
  out.emplace_back(prefix + ".b1", &p.b1);
  out.emplace_back(prefix + ".w2", &p.w2);
  out.emplace_back(prefix + ".b2", &p.b2);
}

std::vector<int> Iota(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

std::vector<uint8_t> CausalMask(int m) {
  std::vector<uint8_t> keep(static_cast<size_t>(m) * m, 0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j <= i; ++j) keep[i * m + j] = 1;
  }
  return keep;
}

std::vector<int> DecoderInput(std::span<const int> target, int bos) {
  std::vector<int> in;
  in.reserve(target.size());
  in.push_back(bos);
  in.insert(in.end(), target.begin(), target.end() - 1);
  return in;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ModelConfig::Validate() const {
  auto fail = [](const std::string& m) { throw ContractError("model config: " + m); };
  if (encoder_layers < 1 || decoder_layers < 1 || d_model < 1 || heads < 1 ||
      d_ff < 1 || vocab_size < 1 || max_positions < 1) {
    fail("all extents must be >= 1");
  }
  if (d_model % heads != 0) fail("d_model must be divisible by heads");
  const int ids[4] = {pad_id, bos_id, eos_id, unk_id};
  for (int i = 0; i < 4; ++i) {
    if (ids[i] < 0 || ids[i] >= vocab_size) fail("reserved id out of vocabulary");
    for (int j = 0; j < i; ++j) {
      if (ids[i] == ids[j]) fail("reserved ids must be distinct");
    }
  }
}

nlohmann::json ModelConfig::ToJson() const {
  return {{"encoder_layers", encoder_layers}, {"decoder_layers", decoder_layers},
          {"d_model", d_model},               {"heads", heads},
          {"d_ff", d_ff},                     {"vocab_size", vocab_size},
          {"max_positions", max_positions},   {"pad_id", pad_id},
          {"bos_id", bos_id},                 {"eos_id", eos_id},
          {"unk_id", unk_id}};
}

ModelConfig ModelConfig::FromJson(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.heads = j.at("heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.pad_id = j.value("pad_id", kPadId);
    c.bos_id = j.value("bos_id", kBosId);
    c.eos_id = j.value("eos_id", kEosId);
    c.unk_id = j.value("unk_id", kUnkId);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  c.Validate();
  return c;
}

std::string_view ControlModeName(ControlMode mode) {
  switch (mode) {
    case ControlMode::kVanilla:
      return "vanilla";
    case ControlMode::kFocus:
      return "focus";
    case ControlMode::kOffset:
      return "offset";
    case ControlMode::kPadding:
      return "padding";
  }
  return "vanilla";
}

ControlMode ParseControlMode(std::string_view name) {
  if (name == "vanilla") return ControlMode::kVanilla;
  if (name == "focus") return ControlMode::kFocus;
  if (name == "offset" || name == "attention-offset") return ControlMode::kOffset;
  if (name == "padding") return ControlMode::kPadding;
  throw ContractError("unknown control mode '" + std::string(name) +
                      "' (expected vanilla, focus, offset or padding)");
}

ControlDirective ControlDirective::Focus(std::vector<uint8_t> mask,
                                         const FocusVectors& fv) {
  ControlDirective d;
  d.mode = ControlMode::kFocus;
  d.highlight = std::move(mask);
  d.focus = &fv;
  return d;
}

ControlDirective ControlDirective::Offset(std::vector<uint8_t> mask, double s) {
  ControlDirective d;
  d.mode = ControlMode::kOffset;
  d.highlight = std::move(mask);
  d.offset = s;
  return d;
}

ControlDirective ControlDirective::Padding(std::vector<uint8_t> mask) {
  ControlDirective d;
  d.mode = ControlMode::kPadding;
  d.highlight = std::move(mask);
  return d;
}

DecodeOptions DecodePreset(std::string_view name) {
  DecodeOptions o;
  if (name == "dialogue-style") {
    o.beam_width = 10;
  } else if (name == "summarization-style") {
    o.beam_width = 4;
  } else {
    throw ContractError("unknown decode preset '" + std::string(name) + "'");
  }
  return o;
}

// ---------------------------------------------------------------------------
// Decoding

std::vector<int> GreedyDecode(const StepScorer& scorer, int bos, int eos, int max_len) {
  std::vector<int> prefix = {bos};
  for (int step = 0; step < max_len; ++step) {
    const auto lp = scorer(prefix);
    int best = 0;
    for (int t = 1; t < static_cast<int>(lp.size()); ++t) {
      if (lp[t] > lp[best]) best = t;
    }
    if (best == eos) break;
    prefix.push_back(best);
  }
  return {prefix.begin() + 1, prefix.end()};
}

std::vector<int> BeamSearchDecode(const StepScorer& scorer, int bos, int eos,
                                  const DecodeOptions& options) {
  if (options.beam_width < 1) throw ContractError("beam_width must be >= 1");
  struct Hypothesis {
    std::vector<int> tokens;  // starts with bos; a finished one ends with eos
    double score = 0.0;
    int generated = 0;
  };
  auto rank_key = [&](const Hypothesis& h) {
    return options.length_norm && h.generated > 0 ? h.score / h.generated : h.score;
  };
  std::vector<Hypothesis> alive = {{{bos}, 0.0, 0}};
  std::vector<Hypothesis> finished;
  for (int step = 0; step < options.max_len && !alive.empty(); ++step) {
    struct Candidate {
      int hyp;
      int token;
      double score;
    };
    std::vector<Candidate> candidates;
    for (int h = 0; h < static_cast<int>(alive.size()); ++h) {
      const auto lp = scorer(alive[h].tokens);
      for (int t = 0; t < static_cast<int>(lp.size()); ++t) {
        candidates.push_back({h, t, alive[h].score + lp[t]});
      }
    }
    // Stable: among equal scores the earlier-expanded hypothesis, then the
    // lower token id, wins.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::vector<Hypothesis> next;
    const int keep = std::min<int>(options.beam_width, static_cast<int>(candidates.size()));
    for (int k = 0; k < keep; ++k) {
      const Candidate& c = candidates[k];
      Hypothesis h{alive[c.hyp].tokens, c.score, alive[c.hyp].generated + 1};
      h.tokens.push_back(c.token);
      if (c.token == eos) {
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    alive = std::move(next);
    if (!options.length_norm && !finished.empty()) {
      double best_finished = -INFINITY;
      for (const auto& h : finished) best_finished = std::max(best_finished, h.score);
      double best_alive = -INFINITY;
      for (const auto& h : alive) best_alive = std::max(best_alive, h.score);
      // Scores only decrease as hypotheses grow.
      if (best_finished >= best_alive) break;
    }
  }
  for (auto& h : alive) finished.push_back(std::move(h));
  const Hypothesis* best = nullptr;
  for (const auto& h : finished) {
    if (best == nullptr || rank_key(h) > rank_key(*best)) best = &h;
  }
  std::vector<int> out(best->tokens.begin() + 1, best->tokens.end());
  if (!out.empty() && out.back() == eos) out.pop_back();
  return out;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(const ModelConfig& config) : config_(config) {
  config_.Validate();
  const int d = config_.d_model;
  token_embedding_ = Tensor(Shape{config_.vocab_size, d}, 0.0);
  source_positions_ = Tensor(Shape{config_.max_positions, d}, 0.0);
  target_positions_ = Tensor(Shape{config_.max_positions, d}, 0.0);
  encoder_.resize(config_.encoder_layers);
  for (auto& layer : encoder_) {
    layer.ln1_gamma = Tensor(Shape{d}, 1.0);
    layer.ln1_beta = Tensor(Shape{d}, 0.0);
    InitAttention(layer.self_attention, d);
    layer.ln2_gamma = Tensor(Shape{d}, 1.0);
    layer.ln2_beta = Tensor(Shape{d}, 0.0);
    InitFeedForward(layer.feed_forward, d, config_.d_ff);
  }
  encoder_final_gamma_ = Tensor(Shape{d}, 1.0);
  encoder_final_beta_ = Tensor(Shape{d}, 0.0);
  decoder_.resize(config_.decoder_layers);
  for (auto& layer : decoder_) {
    layer.ln1_gamma = Tensor(Shape{d}, 1.0);
    layer.ln1_beta = Tensor(Shape{d}, 0.0);
    InitAttention(layer.self_attention, d);
    layer.ln2_gamma = Tensor(Shape{d}, 1.0);
    layer.ln2_beta = Tensor(Shape{d}, 0.0);
    InitAttention(layer.cross_attention, d);
    layer.ln3_gamma = Tensor(Shape{d}, 1.0);
    layer.ln3_beta = Tensor(Shape{d}, 0.0);
    InitFeedForward(layer.feed_forward, d, config_.d_ff);
  }
  decoder_final_gamma_ = Tensor(Shape{d}, 1.0);
  decoder_final_beta_ = Tensor(Shape{d}, 0.0);
  output_weight_ = Tensor(Shape{d, config_.vocab_size}, 0.0);
  output_bias_ = Tensor(Shape{config_.vocab_size}, 0.0);
}

Model Model::Initialize(const ModelConfig& config, uint64_t seed) {
  Model m(config);
  Rng rng(seed);
  for (auto& [name, t] : m.NamedParameters()) {
    if (t->rank() != 2) continue;
    const double fan_in = static_cast<double>(t->shape()[0]);
    const double fan_out = static_cast<double>(t->shape()[1]);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : t->data()) v = (2.0 * rng.Uniform() - 1.0) * a;
  }
  for (Tensor* t : {&m.token_embedding_, &m.source_positions_, &m.target_positions_}) {
    for (double& v : t->data()) {
      // Box-Muller on the engine's uniforms keeps draws identical across
      // standard libraries.
      const double u1 = 1.0 - rng.Uniform();
      const double u2 = rng.Uniform();
      v = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
  }
  return m;
}

std::vector<std::pair<std::string, Tensor*>> Model::NamedParameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("embed.token", &token_embedding_);
  out.emplace_back("embed.source_position", &source_positions_);
  out.emplace_back("embed.target_position", &target_positions_);
  for (size_t l = 0; l < encoder_.size(); ++l) {
    auto& e = encoder_[l];
    const std::string p = "encoder." + std::to_string(l);
    out.emplace_back(p + ".ln1.gamma", &e.ln1_gamma);
    out.emplace_back(p + ".ln1.beta", &e.ln1_beta);
    AddAttention(out, p + ".self_attention", e.self_attention);
    out.emplace_back(p + ".ln2.gamma", &e.ln2_gamma);
    out.emplace_back(p + ".ln2.beta", &e.ln2_beta);
    AddFeedForward(out, p + ".feed_forward", e.feed_forward);
  }
  out.emplace_back("encoder.final_ln.gamma", &encoder_final_gamma_);
  out.emplace_back("encoder.final_ln.beta", &encoder_final_beta_);
  for (size_t l = 0; l < decoder_.size(); ++l) {
    auto& e = decoder_[l];
    const std::string p = "decoder." + std::to_string(l);
    out.emplace_back(p + ".ln1.gamma", &e.ln1_gamma);
    out.emplace_back(p + ".ln1.beta", &e.ln1_beta);
    AddAttention(out, p + ".self_attention", e.self_attention);
    out.emplace_back(p + ".ln2.gamma", &e.ln2_gamma);
    out.emplace_back(p + ".ln2.beta", &e.ln2_beta);
    AddAttention(out, p + ".cross_attention", e.cross_attention);
    out.emplace_back(p + ".ln3.gamma", &e.ln3_gamma);
    out.emplace_back(p + ".ln3.beta", &e.ln3_beta);
    AddFeedForward(out, p + ".feed_forward", e.feed_forward);
  }
  out.emplace_back("decoder.final_ln.gamma", &decoder_final_gamma_);
  out.emplace_back("decoder.final_ln.beta", &decoder_final_beta_);
  out.emplace_back("output.weight", &output_weight_);
  out.emplace_back("output.bias", &output_bias_);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Model::NamedParameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<Model*>(this)->NamedParameters()) {
    out.emplace_back(name, t);
  }
  return out;
}

int64_t Model::ParameterCount() const {
  int64_t n = 0;
  for (const auto& [name, t] : NamedParameters()) n += t->size();
  return n;
}

void Model::SetTrainable(bool trainable) {
  for (auto& [name, t] : NamedParameters()) t->set_requires_grad(trainable);
}

bool Model::BitEqual(const Model& other) const {
  if (!(config_ == other.config_)) return false;
  const auto a = NamedParameters();
  const auto b = other.NamedParameters();
  for (size_t i = 0; i < a.size(); ++i) {
    if (!a[i].second->BitEqual(*b[i].second)) return false;
  }
  return true;
}

void Model::CheckDirective(const ControlDirective& directive, int n) const {
  if (directive.mode == ControlMode::kVanilla) return;
  if (static_cast<int>(directive.highlight.size()) != n) {
    throw ContractError("highlight mask has " + std::to_string(directive.highlight.size()) +
                        " entries for a source of " + std::to_string(n) + " tokens");
  }
  if (directive.mode == ControlMode::kFocus) {
    if (directive.focus == nullptr) throw ContractError("focus mode without focus vectors");
    if (directive.focus->num_layers() != config_.encoder_layers + 1 ||
        directive.focus->d_model() != config_.d_model) {
      throw ContractError("focus vectors do not match the model shape");
    }
  }
  if (directive.mode == ControlMode::kOffset && !std::isfinite(directive.offset)) {
    throw ContractError("attention offset must be finite");
  }
}

Var Model::EmbedSource(Tape& tape, std::span<const int> tokens) const {
  const int n = static_cast<int>(tokens.size());
  if (n < 1) throw ContractError("encode: empty source");
  if (n > config_.max_positions) {
    throw ContractError("encode: source of " + std::to_string(n) +
                        " tokens exceeds max_positions " +
                        std::to_string(config_.max_positions));
  }
  const auto positions = Iota(n);
  return Add(Gather(tape.Leaf(token_embedding_), tokens),
             Gather(tape.Leaf(source_positions_), positions));
}

Var Model::ApplyFocus(Tape& tape, Var h, int layer,
                      const ControlDirective& directive) const {
  if (directive.mode != ControlMode::kFocus) return h;
  const FocusLayer& fl = directive.focus->layers[layer];
  return MaskedScaleBias(h, directive.highlight, tape.Leaf(fl.scale_focus),
                         tape.Leaf(fl.bias_focus), tape.Leaf(fl.scale_nonfocus),
                         tape.Leaf(fl.bias_nonfocus));
}

Var Model::Attention(Tape& tape, Var queries, Var keys_values, const AttentionParams& p,
                     const std::vector<uint8_t>* keep, const Tensor* logit_offsets,
                     std::vector<Tensor>* record) const {
  const int d = config_.d_model;
  const int heads = config_.heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Var q = AddBias(MatMul(queries, tape.Leaf(p.wq)), tape.Leaf(p.bq));
  Var k = AddBias(MatMul(keys_values, tape.Leaf(p.wk)), tape.Leaf(p.bk));
  Var v = AddBias(MatMul(keys_values, tape.Leaf(p.wv)), tape.Leaf(p.bv));
  std::vector<Var> outputs;
  outputs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : SliceCols(q, h * dh, (h + 1) * dh);
    Var kh = heads == 1 ? k : SliceCols(k, h * dh, (h + 1) * dh);
    Var vh = heads == 1 ? v : SliceCols(v, h * dh, (h + 1) * dh);
    Var logits = Scale(MatMulTransposed(qh, kh), scale);
    if (logit_offsets != nullptr) logits = AddConstant(logits, *logit_offsets);
    Var weights = keep != nullptr ? MaskedSoftmax(logits, *keep) : Softmax(logits);
    if (record != nullptr) record->push_back(weights.value());
    outputs.push_back(MatMul(weights, vh));
  }
  Var merged = heads == 1 ? outputs[0] : ConcatCols(outputs);
  return AddBias(MatMul(merged, tape.Leaf(p.wo)), tape.Leaf(p.bo));
}

Var Model::FeedForward(Tape& tape, Var x, const FeedForwardParams& p) const {
  Var hidden = Relu(AddBias(MatMul(x, tape.Leaf(p.w1)), tape.Leaf(p.b1)));
  return AddBias(MatMul(hidden, tape.Leaf(p.w2)), tape.Leaf(p.b2));
}

EncoderOutput Model::Encode(Tape& tape, std::span<const int> tokens,
                            const ControlDirective& directive) const {
  const int n = static_cast<int>(tokens.size());
  CheckDirective(directive, n);
  if (directive.mode == ControlMode::kPadding) {
    std::vector<int> padded(tokens.begin(), tokens.end());
    for (int i = 0; i < n; ++i) {
      if (!directive.highlight[i]) padded[i] = config_.pad_id;
    }
    return EncodeEmbedded(tape, EmbedSource(tape, padded), directive);
  }
  return EncodeEmbedded(tape, EmbedSource(tape, tokens), directive);
}

EncoderOutput Model::EncodeEmbedded(Tape& tape, Var h0,
                                    const ControlDirective& directive) const {
  const int n = static_cast<int>(h0.value().rows());
  if (h0.value().rank() != 2 || h0.value().cols() != config_.d_model) {
    throw DimensionError("encode: input embeddings must be [n, d_model]");
  }
  if (n > config_.max_positions) throw ContractError("encode: source too long");
  CheckDirective(directive, n);
  EncoderOutput out;
  out.source_mask.assign(n, 1);
  Var h = ApplyFocus(tape, h0, 0, directive);
  out.layers.push_back(h);
  for (int l = 0; l < config_.encoder_layers; ++l) {
    const EncoderLayerParams& p = encoder_[l];
    Var a = LayerNorm(h, tape.Leaf(p.ln1_gamma), tape.Leaf(p.ln1_beta));
    h = Add(h, Attention(tape, a, a, p.self_attention, nullptr, nullptr, nullptr));
    Var b = LayerNorm(h, tape.Leaf(p.ln2_gamma), tape.Leaf(p.ln2_beta));
    h = Add(h, FeedForward(tape, b, p.feed_forward));
    if (l + 1 == config_.encoder_layers) {
      h = LayerNorm(h, tape.Leaf(encoder_final_gamma_), tape.Leaf(encoder_final_beta_));
    }
    h = ApplyFocus(tape, h, l + 1, directive);
    out.layers.push_back(h);
  }
  return out;
}

DecoderOutput Model::Decode(Tape& tape, const EncoderOutput& encoded,
                            std::span<const int> decoder_input,
                            const ControlDirective& directive) const {
  const int m = static_cast<int>(decoder_input.size());
  if (m < 1) throw ContractError("decode: empty decoder input");
  if (m > config_.max_positions) {
    throw ContractError("decode: prefix of " + std::to_string(m) +
                        " tokens exceeds max_positions");
  }
  Var memory = encoded.memory();
  const int n = static_cast<int>(memory.value().rows());
  CheckDirective(directive, n);
  Tensor offsets;
  const Tensor* offsets_ptr = nullptr;
  if (directive.mode == ControlMode::kOffset) {
    offsets = Tensor(Shape{n}, 0.0);
    for (int i = 0; i < n; ++i) offsets[i] = directive.highlight[i] ? directive.offset : 0.0;
    offsets_ptr = &offsets;
  }
  const auto causal = CausalMask(m);
  const auto positions = Iota(m);
  Var y = Add(Gather(tape.Leaf(token_embedding_), decoder_input),
              Gather(tape.Leaf(target_positions_), positions));
  DecoderOutput out;
  out.cross_attention.decoder_layers = config_.decoder_layers;
  out.cross_attention.heads = config_.heads;
  for (const DecoderLayerParams& p : decoder_) {
    Var a = LayerNorm(y, tape.Leaf(p.ln1_gamma), tape.Leaf(p.ln1_beta));
    y = Add(y, Attention(tape, a, a, p.self_attention, &causal, nullptr, nullptr));
    Var b = LayerNorm(y, tape.Leaf(p.ln2_gamma), tape.Leaf(p.ln2_beta));
    y = Add(y, Attention(tape, b, memory, p.cross_attention, nullptr, offsets_ptr,
                         &out.cross_attention.weights));
    Var c = LayerNorm(y, tape.Leaf(p.ln3_gamma), tape.Leaf(p.ln3_beta));
    y = Add(y, FeedForward(tape, c, p.feed_forward));
  }
  y = LayerNorm(y, tape.Leaf(decoder_final_gamma_), tape.Leaf(decoder_final_beta_));
  out.logits = AddBias(MatMul(y, tape.Leaf(output_weight_)), tape.Leaf(output_bias_));
  return out;
}

Var Model::SequenceNllEncoded(Tape& tape, const EncoderOutput& encoded,
                              std::span<const int> target,
                              const ControlDirective& directive) const {
  if (target.empty()) throw ContractError("sequence_nll: empty target");
  if (target.back() != config_.eos_id) {
    throw ContractError("sequence_nll: target must end with eos");
  }
  const auto input = DecoderInput(target, config_.bos_id);
  DecoderOutput out = Decode(tape, encoded, input, directive);
  return NllLoss(LogSoftmax(out.logits), target);
}

Var Model::SequenceNll(Tape& tape, std::span<const int> source,
                       std::span<const int> target,
                       const ControlDirective& directive) const {
  if (target.empty()) throw ContractError("sequence_nll: empty target");
  return SequenceNllEncoded(tape, Encode(tape, source, directive), target, directive);
}

double Model::SequenceNll(std::span<const int> source, std::span<const int> target,
                          const ControlDirective& directive) const {
  Tape tape;
  return SequenceNll(tape, source, target, directive).value().item();
}

StepScorer Model::MakeScorer(std::span<const int> source,
                             const ControlDirective& directive) const {
  auto memory = std::make_shared<Tensor>();
  {
    Tape tape;
    *memory = Encode(tape, source, directive).memory().value();
  }
  memory->set_requires_grad(false);
  return [this, memory, directive](std::span<const int> prefix) {
    Tape tape;
    EncoderOutput encoded;
    encoded.layers.push_back(tape.Leaf(*memory));
    DecoderOutput out = Decode(tape, encoded, prefix, directive);
    Var lp = LogSoftmax(out.logits);
    const Tensor& v = lp.value();
    const int64_t last = v.rows() - 1;
    return std::vector<double>(v.data().begin() + last * v.cols(),
                               v.data().begin() + (last + 1) * v.cols());
  };
}

std::vector<int> Model::Greedy(std::span<const int> source,
                               const ControlDirective& directive, int max_len) const {
  return GreedyDecode(MakeScorer(source, directive), config_.bos_id, config_.eos_id,
                      std::min(max_len, config_.max_positions - 1));
}

std::vector<int> Model::BeamSearch(std::span<const int> source,
                                   const ControlDirective& directive,
                                   const DecodeOptions& options) const {
  DecodeOptions o = options;
  o.max_len = std::min(o.max_len, config_.max_positions - 1);
  return BeamSearchDecode(MakeScorer(source, directive), config_.bos_id,
                          config_.eos_id, o);
}

// ---------------------------------------------------------------------------
// Persistence

void SaveModel(const std::string& path, const Model& model, const Vocab& vocab,
               const nlohmann::json& extra_meta) {
  if (vocab.size() != model.config().vocab_size) {
    throw ContractError("vocabulary size does not match the model");
  }
  Container c;
  c.type = "model";
  c.meta = extra_meta.is_object() ? extra_meta : nlohmann::json::object();
  c.meta["config"] = model.config().ToJson();
  c.meta["vocab"] = vocab.tokens();
  for (const auto& [name, t] : model.NamedParameters()) c.tensors.push_back({name, *t});
  WriteContainer(path, c);
}

LoadedModel LoadModel(const std::string& path) {
  Container c = ReadContainer(path);
  if (c.type != "model") {
    throw ParseError("'" + path + "' holds '" + c.type + "', not model weights");
  }
  if (!c.meta.contains("config") || !c.meta.contains("vocab")) {
    throw ParseError("'" + path + "' lacks a model config or vocabulary");
  }
  const ModelConfig config = ModelConfig::FromJson(c.meta["config"]);
  std::vector<std::string> tokens;
  try {
    tokens = c.meta["vocab"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid vocabulary: ") + e.what());
  }
  Vocab vocab = Vocab::FromTokens(tokens);
  Model model(config);
  for (auto& [name, t] : model.NamedParameters()) {
    const Tensor& src = c.Get(name);
    if (src.shape() != t->shape()) {
      throw ParseError("tensor '" + name + "' has shape " + ShapeToString(src.shape()) +
                       ", expected " + ShapeToString(t->shape()));
    }
    *t = src;
  }
  nlohmann::json meta = c.meta;
  return {std::move(model), std::move(vocab), std::move(meta)};
}

// ---------------------------------------------------------------------------
// Training

std::vector<int> RandomlyPadSentences(const EncodedExample& example, double p_pad,
                                      uint64_t seed, int epoch) {
  std::vector<int> out = example.source;
  for (const auto& span : example.spans) {
    const std::string key =
        example.id + "/" + std::to_string(epoch) + "/" + std::to_string(span.index);
    const double u = static_cast<double>(KeyedRandom(seed, key) >> 11) * 0x1.0p-53;
    if (u < p_pad) {
      for (int i = span.begin; i < span.end; ++i) out[i] = kPadId;
    }
  }
  return out;
}

double ScheduledLr(const TrainOptions& options, int64_t completed_steps,
                   int64_t total_steps) {
  const double step = static_cast<double>(completed_steps + 1);
  if (options.warmup_steps > 0 && step <= options.warmup_steps) {
    return options.lr * step / static_cast<double>(options.warmup_steps);
  }
  if (!options.cosine_decay || total_steps <= options.warmup_steps) return options.lr;
  const double progress = (step - options.warmup_steps) /
                          static_cast<double>(total_steps - options.warmup_steps);
  return options.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
}

TrainResult TrainBase(const std::vector<EncodedExample>& data,
                      const ModelConfig& config, const TrainOptions& options) {
  if (data.empty()) throw ContractError("train_base: empty dataset");
  if (options.batch_size < 1) throw ContractError("train_base: batch_size must be >= 1");
  TrainResult result{Model::Initialize(config, options.seed), {}};
  Model& model = result.model;
  model.SetTrainable(true);
  std::vector<Tensor*> params;
  for (auto& [name, t] : model.NamedParameters()) params.push_back(t);
  AdamState adam({options.lr, 0.9, 0.999, 1e-8, options.weight_decay});
  Rng order_rng(SplitMix64(options.seed ^ 0x5eed0f0adULL));
  const auto vanilla = ControlDirective::Vanilla();
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor> grads;
  for (Tensor* p : params) grads.emplace_back(p->shape(), 0.0);
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(data.size()) + options.batch_size - 1) / options.batch_size;
  const int64_t total_steps = steps_per_epoch * options.epochs;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[order_rng.UniformInt(i + 1)]);
    }
    double epoch_nll = 0.0;
    int64_t epoch_tokens = 0;
    for (size_t start = 0; start < order.size(); start += options.batch_size) {
      const size_t end = std::min(order.size(), start + options.batch_size);
      int64_t batch_tokens = 0;
      for (size_t k = start; k < end; ++k) batch_tokens += data[order[k]].target.size();
      for (Tensor& g : grads) g.Fill(0.0);
      double batch_nll = 0.0;
      const int64_t step = adam.step + 1;
      try {
        for (size_t k = start; k < end; ++k) {
          const EncodedExample& ex = data[order[k]];
          Tape tape;
          const std::vector<int> source =
              options.variant == TrainVariant::kRandomPadding
                  ? RandomlyPadSentences(ex, options.p_pad, options.seed, epoch)
                  : ex.source;
          Var nll = model.SequenceNll(tape, source, ex.target, vanilla);
          batch_nll += nll.value().item();
          tape.Backward(Scale(nll, 1.0 / static_cast<double>(batch_tokens)));
          for (size_t p = 0; p < params.size(); ++p) {
            if (const Tensor* g = tape.FindGrad(*params[p])) {
              auto dst = grads[p].data();
              auto src = g->data();
              for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            }
          }
        }
        if (options.clip_norm > 0.0) {
          double sq = 0.0;
          for (const Tensor& g : grads) {
            for (double v : g.data()) sq += v * v;
          }
          const double norm = std::sqrt(sq);
          if (norm > options.clip_norm) {
            const double f = options.clip_norm / norm;
            for (Tensor& g : grads) {
              for (double& v : g.data()) v *= f;
            }
          }
        }
        adam.options.lr = ScheduledLr(options, adam.step, total_steps);
        AdamStep(params, grads, adam);
      } catch (const NumericFailure& e) {
        throw NumericFailure("train_base diverged at step " + std::to_string(step) +
                             ": " + e.what());
      }
      result.loss_curve.push_back(batch_nll / static_cast<double>(batch_tokens));
      epoch_nll += batch_nll;
      epoch_tokens += batch_tokens;
    }
    if (options.on_epoch) {
      options.on_epoch(epoch, epoch_nll / static_cast<double>(epoch_tokens), model);
    }
  }
  model.SetTrainable(false);
  return result;
}

TokenAccuracy NextTokenAccuracy(const Model& model,
                                const std::vector<EncodedExample>& data,
                                int first_position) {
  TokenAccuracy acc;
  const auto vanilla = ControlDirective::Vanilla();
  for (const auto& ex : data) {
    Tape tape;
    EncoderOutput enc = model.Encode(tape, ex.source, vanilla);
    const auto input = DecoderInput(ex.target, model.config().bos_id);
    DecoderOutput out = model.Decode(tape, enc, input, vanilla);
    const Tensor& logits = out.logits.value();
    for (int j = first_position; j < static_cast<int>(ex.target.size()); ++j) {
      int best = 0;
      for (int t = 1; t < logits.cols(); ++t) {
        if (logits.at(j, t) > logits.at(j, best)) best = t;
      }
      acc.correct += best == ex.target[j] ? 1 : 0;
      acc.total += 1;
    }
  }
  return acc;
}

}  // namespace focusvec
