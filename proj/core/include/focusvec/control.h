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

// Focus-vector training, attention-offset tuning and steered decoding.

#ifndef FOCUSVEC_CONTROL_H_
#define FOCUSVEC_CONTROL_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "focusvec/corpus.h"
#include "focusvec/focus_vectors.h"
#include "focusvec/model.h"

namespace focusvec {

FocusVectors InitIdentity(const ModelConfig& config);

void SaveFocusVectors(const std::string& path, const FocusVectors& fv,
                      const nlohmann::json& extra_meta = nlohmann::json::object());
FocusVectors LoadFocusVectors(const std::string& path);

// Builds the directive for `mode` from an example's gold or annotated
// sentence highlights.
ControlDirective DirectiveFor(ControlMode mode, const EncodedExample& example,
                              const FocusVectors* fv = nullptr, double offset = 0.0);

enum class LayerScope { kAll, kFirst, kLast };
std::string_view LayerScopeName(LayerScope scope);
// Accepts all, first, last, first-only, last-only.
LayerScope ParseLayerScope(std::string_view name);

// The learning-rate grid {1, 3, 5} x {1e-4, 1e-3, 1e-2, 1e-1}.
std::vector<double> DefaultLrGrid();

struct FocusTrainOptions {
  double lr = 1e-3;
  int epochs = 3;
  int batch_size = 16;
  uint64_t seed = 1;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  LayerScope layer_scope = LayerScope::kAll;
  // Also updates the base model with model_lr (default 0.1 * lr).
  bool joint_finetune = false;
  std::optional<double> model_lr;
  // Trains once per grid value and keeps the lowest dev perplexity.
  bool grid = false;
  std::vector<double> grid_lrs = DefaultLrGrid();
  std::function<void(int, double)> on_epoch;
};

struct FocusTrainReport {
  double lr = 0.0;
  double model_lr = 0.0;
  LayerScope layer_scope = LayerScope::kAll;
  bool joint_finetune = false;
  int epochs = 0;
  int64_t steps = 0;
  std::vector<double> loss_curve;
  // Present when a dev set was given.
  std::optional<double> dev_ppl_vanilla;
  std::optional<double> dev_ppl_focus;
  // (lr, dev ppl) per grid value, in grid order.
  std::vector<std::pair<double, double>> grid;

  nlohmann::json ToJson() const;
};

struct FocusTrainResult {
  FocusVectors vectors;
  // Set only with joint_finetune.
  std::optional<Model> model;
  FocusTrainReport report;
};

// Minimizes the summed NLL of every target under focus control with each
// example's highlights. The base model is left untouched; with
// joint_finetune a tuned copy is returned instead.
FocusTrainResult TrainFocus(const Model& model, const std::vector<EncodedExample>& train,
                            const std::vector<EncodedExample>* dev,
                            const FocusTrainOptions& options);

struct OffsetProbe {
  int iteration = 0;
  double offset = 0.0;
  double ppl = 0.0;
};

struct OffsetInterval {
  int iteration = 0;
  // Probes lie in (lo, hi].
  double lo = 0.0;
  double hi = 0.0;
  double best_offset = 0.0;
  double best_ppl = 0.0;
};

struct OffsetConfig {
  double offset = 0.0;
  bool converged = false;
  std::vector<OffsetInterval> intervals;
  std::vector<OffsetProbe> trace;

  nlohmann::json ToJson() const;
  static OffsetConfig FromJson(const nlohmann::json& j);
};

void SaveOffsetConfig(const std::string& path, const OffsetConfig& config);
OffsetConfig LoadOffsetConfig(const std::string& path);

struct OffsetTuneOptions {
  double lo = 0.0;
  double hi = 100.0;
  int probes = 20;
  double tolerance = 1e-3;
  int max_iterations = 30;
};

// Interval search over s in (lo, hi] minimizing dev perplexity under
// attention-offset control; each round narrows to one probe step either side
// of the best probe and stops once the best perplexity moves by less than
// the tolerance.
OffsetConfig TuneOffset(const Model& model, const std::vector<EncodedExample>& dev,
                        const OffsetTuneOptions& options = {});

struct SteerParams {
  const FocusVectors* focus = nullptr;
  double offset = 0.0;
  DecodeOptions decode;
};

// Decodes under `mode` with a token-level user highlight, which must cover
// whole sentences of `spans`.
std::vector<int> Steer(const Model& model, std::span<const int> source,
                       std::span<const SentenceSpan> spans,
                       std::span<const uint8_t> highlight, ControlMode mode,
                       const SteerParams& params);

}  // namespace focusvec

#endif  // FOCUSVEC_CONTROL_H_
