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

// Transformer encoder-decoder with control hooks.
//
// Blocks are pre-layer-norm. The encoder records the output of every layer
// (layer 0 is token + position embedding). Under focus control the focus
// transform is applied to each recorded layer output and the transformed
// tensor is what the next layer, and for the last layer the decoder, consumes.
// The final encoder layer norm belongs to the last layer's output.
//
// Under attention-offset control a constant s * c_i is added to every
// cross-attention logit of source position i, in every head of every decoder
// layer, before the softmax. Under padding control the tokens outside the
// highlight are replaced with <pad> before embedding.

#ifndef FOCUSVEC_MODEL_H_
#define FOCUSVEC_MODEL_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "focusvec/corpus.h"
#include "focusvec/focus_vectors.h"
#include "focusvec/tensor.h"

namespace focusvec {

struct ModelConfig {
  int encoder_layers = 2;
  int decoder_layers = 2;
  int d_model = 64;
  int heads = 4;
  int d_ff = 128;
  int vocab_size = 0;
  int max_positions = 256;
  int pad_id = kPadId;
  int bos_id = kBosId;
  int eos_id = kEosId;
  int unk_id = kUnkId;

  // Throws ContractError when an invariant does not hold.
  void Validate() const;
  nlohmann::json ToJson() const;
  static ModelConfig FromJson(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

enum class ControlMode { kVanilla, kFocus, kOffset, kPadding };

std::string_view ControlModeName(ControlMode mode);
// Accepts vanilla, focus, offset (alias attention-offset), padding.
ControlMode ParseControlMode(std::string_view name);

struct ControlDirective {
  ControlMode mode = ControlMode::kVanilla;
  // One entry per source token; 1 marks a highlighted token.
  std::vector<uint8_t> highlight;
  const FocusVectors* focus = nullptr;
  double offset = 0.0;

  static ControlDirective Vanilla() { return {}; }
  static ControlDirective Focus(std::vector<uint8_t> mask, const FocusVectors& fv);
  static ControlDirective Offset(std::vector<uint8_t> mask, double s);
  static ControlDirective Padding(std::vector<uint8_t> mask);
};

struct EncoderOutput {
  // encoder_layers + 1 tensors of shape [n, d].
  std::vector<Var> layers;
  // Source positions visible to attention.
  std::vector<uint8_t> source_mask;

  Var memory() const { return layers.back(); }
};

// Post-softmax cross-attention weights for every decoder layer and head.
struct CrossAttentionRecord {
  int decoder_layers = 0;
  int heads = 0;
  // Index layer * heads + head; each is [target_len, source_len].
  std::vector<Tensor> weights;

  const Tensor& at(int layer, int head) const { return weights[layer * heads + head]; }
};

struct DecoderOutput {
  Var logits;  // [target_len, vocab]
  CrossAttentionRecord cross_attention;
};

struct DecodeOptions {
  int beam_width = 4;
  int max_len = 32;
  // Rank finished hypotheses by mean token log-probability instead of total.
  bool length_norm = false;
};

// "dialogue-style" (beam 10) or "summarization-style" (beam 4).
DecodeOptions DecodePreset(std::string_view name);

// Next-token log-probabilities given a prefix that starts with bos.
using StepScorer = std::function<std::vector<double>(std::span<const int> prefix)>;

// Returns the generated tokens without bos and eos.
std::vector<int> GreedyDecode(const StepScorer& scorer, int bos, int eos, int max_len);
std::vector<int> BeamSearchDecode(const StepScorer& scorer, int bos, int eos,
                                  const DecodeOptions& options);

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayerParams {
  Tensor ln1_gamma, ln1_beta;
  AttentionParams self_attention;
  Tensor ln2_gamma, ln2_beta;
  FeedForwardParams feed_forward;
};

struct DecoderLayerParams {
  Tensor ln1_gamma, ln1_beta;
  AttentionParams self_attention;
  Tensor ln2_gamma, ln2_beta;
  AttentionParams cross_attention;
  Tensor ln3_gamma, ln3_beta;
  FeedForwardParams feed_forward;
};

class Model {
 public:
  // Zero weights, unit layer-norm gains.
  explicit Model(const ModelConfig& config);
  // Xavier-uniform matrices and standard-normal token and position
  // embeddings, drawn from `seed`.
  static Model Initialize(const ModelConfig& config, uint64_t seed);

  const ModelConfig& config() const { return config_; }

  std::vector<std::pair<std::string, Tensor*>> NamedParameters();
  std::vector<std::pair<std::string, const Tensor*>> NamedParameters() const;
  int64_t ParameterCount() const;
  void SetTrainable(bool trainable);
  bool BitEqual(const Model& other) const;

  // Token plus position embedding of the source: h^0.
  Var EmbedSource(Tape& tape, std::span<const int> tokens) const;
  EncoderOutput Encode(Tape& tape, std::span<const int> tokens,
                       const ControlDirective& directive) const;
  // Runs the encoder stack from given input embeddings h^0 [n, d]. Padding
  // control is not applicable here and is treated as vanilla.
  EncoderOutput EncodeEmbedded(Tape& tape, Var h0,
                               const ControlDirective& directive) const;
  // Teacher-forced decoder pass over `decoder_input` (starting with bos).
  DecoderOutput Decode(Tape& tape, const EncoderOutput& encoded,
                       std::span<const int> decoder_input,
                       const ControlDirective& directive) const;

  // -log P(target | source), summed over target tokens. `target` must end
  // with eos; the decoder input is bos followed by target[:-1].
  Var SequenceNll(Tape& tape, std::span<const int> source, std::span<const int> target,
                  const ControlDirective& directive) const;
  double SequenceNll(std::span<const int> source, std::span<const int> target,
                     const ControlDirective& directive) const;
  // Same, from an already encoded source.
  Var SequenceNllEncoded(Tape& tape, const EncoderOutput& encoded,
                         std::span<const int> target,
                         const ControlDirective& directive) const;

  std::vector<int> Greedy(std::span<const int> source, const ControlDirective& directive,
                          int max_len) const;
  std::vector<int> BeamSearch(std::span<const int> source,
                              const ControlDirective& directive,
                              const DecodeOptions& options) const;

  // Validates the directive against a source of n tokens.
  void CheckDirective(const ControlDirective& directive, int n) const;

 private:
  Var Attention(Tape& tape, Var queries, Var keys_values, const AttentionParams& p,
                const std::vector<uint8_t>* keep, const Tensor* logit_offsets,
                std::vector<Tensor>* record) const;
  Var FeedForward(Tape& tape, Var x, const FeedForwardParams& p) const;
  Var ApplyFocus(Tape& tape, Var h, int layer, const ControlDirective& directive) const;
  StepScorer MakeScorer(std::span<const int> source,
                        const ControlDirective& directive) const;

  ModelConfig config_;
  Tensor token_embedding_;
  Tensor source_positions_;
  Tensor target_positions_;
  std::vector<EncoderLayerParams> encoder_;
  Tensor encoder_final_gamma_, encoder_final_beta_;
  std::vector<DecoderLayerParams> decoder_;
  Tensor decoder_final_gamma_, decoder_final_beta_;
  Tensor output_weight_, output_bias_;
};

void SaveModel(const std::string& path, const Model& model, const Vocab& vocab,
               const nlohmann::json& extra_meta = nlohmann::json::object());

struct LoadedModel {
  Model model;
  Vocab vocab;
  nlohmann::json meta;
};
LoadedModel LoadModel(const std::string& path);

enum class TrainVariant { kStandard, kRandomPadding };

struct TrainOptions {
  double lr = 1e-3;
  int batch_size = 16;
  int epochs = 10;
  uint64_t seed = 1;
  double weight_decay = 0.01;
  // Global gradient-norm clip; <= 0 disables clipping.
  double clip_norm = 1.0;
  // Linear warmup over this many optimizer steps.
  int warmup_steps = 0;
  // Cosine decay to zero over the remaining steps.
  bool cosine_decay = false;
  TrainVariant variant = TrainVariant::kStandard;
  // Per-sentence padding probability for the random-padding variant.
  double p_pad = 0.5;
  // Called after each epoch with the epoch index, its mean token nll and the
  // model so far.
  std::function<void(int, double, const Model&)> on_epoch;
};

struct TrainResult {
  Model model;
  // Mean per-token NLL of every optimizer step.
  std::vector<double> loss_curve;
};

// Learning rate for the optimizer step after `completed_steps` steps.
double ScheduledLr(const TrainOptions& options, int64_t completed_steps,
                   int64_t total_steps);

TrainResult TrainBase(const std::vector<EncodedExample>& data,
                      const ModelConfig& config, const TrainOptions& options);

// Replaces the tokens of every sentence selected by the keyed coin flip with
// <pad>; used by the random-padding variant.
std::vector<int> RandomlyPadSentences(const EncodedExample& example, double p_pad,
                                      uint64_t seed, int epoch);

// Teacher-forced argmax accuracy over target positions >= first_position.
struct TokenAccuracy {
  int64_t correct = 0;
  int64_t total = 0;
  double value() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};
TokenAccuracy NextTokenAccuracy(const Model& model,
                                const std::vector<EncodedExample>& data,
                                int first_position = 0);

}  // namespace focusvec

#endif  // FOCUSVEC_MODEL_H_
