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

#include "focusvec/control.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "focusvec/checkpoint.h"
#include "focusvec/errors.h"
#include "focusvec/evalkit.h"
#include "focusvec/random.h"

namespace focusvec {
namespace {

bool InScope(LayerScope scope, int layer, int num_layers) {
  switch (scope) {
    case LayerScope::kAll:
      return true;
    case LayerScope::kFirst:
      return layer == 0;
    case LayerScope::kLast:
      return layer == num_layers - 1;
  }
  return true;
}

void ClipGlobalNorm(std::span<Tensor> grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double f = max_norm / norm;
  for (Tensor& g : grads) {
    for (double& v : g.data()) v *= f;
  }
}

struct SingleRun {
  FocusVectors vectors;
  std::optional<Model> model;
  std::vector<double> loss_curve;
  int64_t steps = 0;
};

SingleRun RunFocusTraining(const Model& base, const std::vector<EncodedExample>& train,
                           double lr, double model_lr, const FocusTrainOptions& options) {
  SingleRun run{InitIdentity(base.config()), std::nullopt, {}, 0};
  if (options.joint_finetune) {
    run.model.emplace(base);
    run.model->SetTrainable(true);
  }
  const Model& model = run.model ? *run.model : base;
  const int num_layers = run.vectors.num_layers();

  std::vector<Tensor*> focus_params;
  for (int l = 0; l < num_layers; ++l) {
    FocusLayer& fl = run.vectors.layers[l];
    const bool trainable = InScope(options.layer_scope, l, num_layers);
    for (Tensor* t : {&fl.scale_focus, &fl.bias_focus, &fl.scale_nonfocus, &fl.bias_nonfocus}) {
      t->set_requires_grad(trainable);
      if (trainable) focus_params.push_back(t);
    }
  }
  std::vector<Tensor*> model_params;
  if (run.model) {
    for (auto& [name, t] : run.model->NamedParameters()) model_params.push_back(t);
  }
  std::vector<Tensor*> all_params = focus_params;
  all_params.insert(all_params.end(), model_params.begin(), model_params.end());
  std::vector<Tensor> grads;
  for (Tensor* p : all_params) grads.emplace_back(p->shape(), 0.0);

  AdamState focus_adam({lr, 0.9, 0.999, 1e-8, options.weight_decay});
  AdamState model_adam({model_lr, 0.9, 0.999, 1e-8, options.weight_decay});
  Rng order_rng(SplitMix64(options.seed ^ 0xf0c05ULL));
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[order_rng.UniformInt(i + 1)]);
    }
    double epoch_nll = 0.0;
    int64_t epoch_tokens = 0;
    for (size_t start = 0; start < order.size(); start += options.batch_size) {
      const size_t end = std::min(order.size(), start + options.batch_size);
      int64_t batch_tokens = 0;
      for (size_t k = start; k < end; ++k) batch_tokens += train[order[k]].target.size();
      for (Tensor& g : grads) g.Fill(0.0);
      double batch_nll = 0.0;
      try {
        for (size_t k = start; k < end; ++k) {
          const EncodedExample& ex = train[order[k]];
          Tape tape;
          const auto directive =
              ControlDirective::Focus(HighlightMask(ex.spans, ex.highlights), run.vectors);
          Var nll = model.SequenceNll(tape, ex.source, ex.target, directive);
          batch_nll += nll.value().item();
          tape.Backward(Scale(nll, 1.0 / static_cast<double>(batch_tokens)));
          for (size_t p = 0; p < all_params.size(); ++p) {
            if (const Tensor* g = tape.FindGrad(*all_params[p])) {
              auto dst = grads[p].data();
              auto src = g->data();
              for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            }
          }
        }
        ClipGlobalNorm(grads, options.clip_norm);
        AdamStep(focus_params, std::span<const Tensor>(grads.data(), focus_params.size()),
                 focus_adam);
        if (!model_params.empty()) {
          AdamStep(model_params,
                   std::span<const Tensor>(grads.data() + focus_params.size(),
                                           model_params.size()),
                   model_adam);
        }
      } catch (const NumericFailure& e) {
        throw NumericFailure("train_focus diverged at step " +
                             std::to_string(run.steps + 1) + ": " + e.what());
      }
      ++run.steps;
      run.loss_curve.push_back(batch_nll / static_cast<double>(batch_tokens));
      epoch_nll += batch_nll;
      epoch_tokens += batch_tokens;
    }
    if (options.on_epoch) {
      options.on_epoch(epoch, epoch_nll / static_cast<double>(epoch_tokens));
    }
  }
  run.vectors.SetRequiresGrad(false);
  if (run.model) run.model->SetTrainable(false);
  return run;
}

double FocusDevPpl(const Model& model, const FocusVectors& fv,
                   const std::vector<EncodedExample>& dev) {
  return Perplexity(model, dev, [&fv](const EncodedExample& ex) {
    return DirectiveFor(ControlMode::kFocus, ex, &fv);
  });
}

void RequireHighlights(const std::vector<EncodedExample>& data, const char* what) {
  for (const auto& ex : data) {
    if (ex.highlights.empty()) {
      throw ContractError(std::string(what) + ": example '" + ex.id +
                          "' has no highlights");
    }
  }
}

}  // namespace

FocusVectors InitIdentity(const ModelConfig& config) {
  config.Validate();
  return FocusVectors::Identity(config.encoder_layers, config.d_model);
}

void SaveFocusVectors(const std::string& path, const FocusVectors& fv,
                      const nlohmann::json& extra_meta) {
  Container c;
  c.type = "focus_vectors";
  c.meta = extra_meta.is_object() ? extra_meta : nlohmann::json::object();
  c.meta["num_layers"] = fv.num_layers();
  c.meta["d_model"] = fv.d_model();
  c.meta["parameter_count"] = fv.ParameterCount();
  for (const auto& [name, t] : fv.NamedParameters()) c.tensors.push_back({name, *t});
  WriteContainer(path, c);
}

FocusVectors LoadFocusVectors(const std::string& path) {
  const Container c = ReadContainer(path);
  if (c.type != "focus_vectors") {
    throw ParseError("'" + path + "' holds '" + c.type + "', not focus vectors");
  }
  int num_layers = 0;
  int d = 0;
  try {
    num_layers = c.meta.at("num_layers").get<int>();
    d = c.meta.at("d_model").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("focus vectors header: ") + e.what());
  }
  if (num_layers < 1 || d < 1) throw ParseError("focus vectors header: bad extents");
  FocusVectors fv = FocusVectors::Identity(num_layers - 1, d);
  for (auto& [name, t] : fv.NamedParameters()) {
    const Tensor& src = c.Get(name);
    if (src.shape() != t->shape()) {
      throw ParseError("tensor '" + name + "' has shape " + ShapeToString(src.shape()));
    }
    *t = src;
  }
  return fv;
}

ControlDirective DirectiveFor(ControlMode mode, const EncodedExample& example,
                              const FocusVectors* fv, double offset) {
  if (mode == ControlMode::kVanilla) return ControlDirective::Vanilla();
  auto mask = HighlightMask(example.spans, example.highlights);
  switch (mode) {
    case ControlMode::kFocus:
      if (fv == nullptr) throw ContractError("focus mode requires focus vectors");
      return ControlDirective::Focus(std::move(mask), *fv);
    case ControlMode::kOffset:
      return ControlDirective::Offset(std::move(mask), offset);
    case ControlMode::kPadding:
      return ControlDirective::Padding(std::move(mask));
    case ControlMode::kVanilla:
      break;
  }
  return ControlDirective::Vanilla();
}

std::string_view LayerScopeName(LayerScope scope) {
  switch (scope) {
    case LayerScope::kAll:
      return "all";
    case LayerScope::kFirst:
      return "first";
    case LayerScope::kLast:
      return "last";
  }
  return "all";
}

LayerScope ParseLayerScope(std::string_view name) {
  if (name == "all") return LayerScope::kAll;
  if (name == "first" || name == "first-only") return LayerScope::kFirst;
  if (name == "last" || name == "last-only") return LayerScope::kLast;
  throw ContractError("unknown layer scope '" + std::string(name) +
                      "' (expected all, first or last)");
}

std::vector<double> DefaultLrGrid() {
  std::vector<double> grid;
  for (double base : {1e-4, 1e-3, 1e-2, 1e-1}) {
    for (double m : {1.0, 3.0, 5.0}) grid.push_back(m * base);
  }
  return grid;
}

nlohmann::json FocusTrainReport::ToJson() const {
  nlohmann::json j = {{"lr", lr},
                      {"layer_scope", LayerScopeName(layer_scope)},
                      {"joint_finetune", joint_finetune},
                      {"epochs", epochs},
                      {"steps", steps},
                      {"loss_curve", loss_curve}};
  if (joint_finetune) j["model_lr"] = model_lr;
  if (dev_ppl_vanilla) j["dev_ppl_vanilla"] = *dev_ppl_vanilla;
  if (dev_ppl_focus) j["dev_ppl_focus"] = *dev_ppl_focus;
  if (!grid.empty()) {
    nlohmann::json g = nlohmann::json::array();
    for (const auto& [glr, ppl] : grid) g.push_back({{"lr", glr}, {"dev_ppl", ppl}});
    j["grid"] = g;
  }
  return j;
}

FocusTrainResult TrainFocus(const Model& model, const std::vector<EncodedExample>& train,
                            const std::vector<EncodedExample>* dev,
                            const FocusTrainOptions& options) {
  if (train.empty()) throw ContractError("train_focus: empty dataset");
  if (options.batch_size < 1) throw ContractError("train_focus: batch_size must be >= 1");
  if (options.epochs < 0) throw ContractError("train_focus: negative epochs");
  RequireHighlights(train, "train_focus");
  if (dev != nullptr) {
    if (dev->empty()) throw ContractError("train_focus: empty dev set");
    RequireHighlights(*dev, "train_focus dev");
  }
  if (options.grid && dev == nullptr) {
    throw ContractError("train_focus: grid search needs a dev set");
  }
  auto model_lr_for = [&](double lr) { return options.model_lr.value_or(0.1 * lr); };

  FocusTrainReport report;
  report.layer_scope = options.layer_scope;
  report.joint_finetune = options.joint_finetune;
  report.epochs = options.epochs;

  std::optional<SingleRun> best;
  double best_ppl = INFINITY;
  if (options.grid) {
    if (options.grid_lrs.empty()) throw ContractError("train_focus: empty lr grid");
    for (double lr : options.grid_lrs) {
      SingleRun run = RunFocusTraining(model, train, lr, model_lr_for(lr), options);
      const double ppl = FocusDevPpl(run.model ? *run.model : model, run.vectors, *dev);
      report.grid.emplace_back(lr, ppl);
      if (!best || ppl < best_ppl) {
        best_ppl = ppl;
        best = std::move(run);
        report.lr = lr;
      }
    }
  } else {
    best = RunFocusTraining(model, train, options.lr, model_lr_for(options.lr), options);
    report.lr = options.lr;
  }
  report.model_lr = model_lr_for(report.lr);
  report.steps = best->steps;
  report.loss_curve = best->loss_curve;
  if (dev != nullptr) {
    report.dev_ppl_vanilla =
        Perplexity(model, *dev, [](const EncodedExample&) { return ControlDirective::Vanilla(); });
    report.dev_ppl_focus = FocusDevPpl(best->model ? *best->model : model, best->vectors, *dev);
  }
  return {std::move(best->vectors), std::move(best->model), std::move(report)};
}

nlohmann::json OffsetConfig::ToJson() const {
  nlohmann::json ints = nlohmann::json::array();
  for (const auto& i : intervals) {
    ints.push_back({{"iteration", i.iteration},
                    {"lo", i.lo},
                    {"hi", i.hi},
                    {"best_offset", i.best_offset},
                    {"best_ppl", i.best_ppl}});
  }
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : trace) {
    probes.push_back({{"iteration", p.iteration}, {"offset", p.offset}, {"ppl", p.ppl}});
  }
  return {{"type", "offset_config"},
          {"offset", offset},
          {"converged", converged},
          {"intervals", ints},
          {"trace", probes}};
}

OffsetConfig OffsetConfig::FromJson(const nlohmann::json& j) {
  OffsetConfig c;
  try {
    c.offset = j.at("offset").get<double>();
    c.converged = j.value("converged", false);
    for (const auto& i : j.value("intervals", nlohmann::json::array())) {
      c.intervals.push_back({i.at("iteration").get<int>(), i.at("lo").get<double>(),
                             i.at("hi").get<double>(), i.at("best_offset").get<double>(),
                             i.at("best_ppl").get<double>()});
    }
    for (const auto& p : j.value("trace", nlohmann::json::array())) {
      c.trace.push_back({p.at("iteration").get<int>(), p.at("offset").get<double>(),
                         p.at("ppl").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("offset config: ") + e.what());
  }
  if (!(c.offset >= 0.0) || !std::isfinite(c.offset)) {
    throw ParseError("offset config: offset must be a finite non-negative number");
  }
  return c;
}

void SaveOffsetConfig(const std::string& path, const OffsetConfig& config) {
  WriteFileAtomic(path, config.ToJson().dump(2) + "\n");
}

OffsetConfig LoadOffsetConfig(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ReadFile(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
  return OffsetConfig::FromJson(j);
}

OffsetConfig TuneOffset(const Model& model, const std::vector<EncodedExample>& dev,
                        const OffsetTuneOptions& options) {
  if (dev.empty()) throw ContractError("tune_offset: empty dev set");
  if (options.probes < 1 || !(options.hi > options.lo) || options.lo < 0.0) {
    throw ContractError("tune_offset: need probes >= 1 and 0 <= lo < hi");
  }
  RequireHighlights(dev, "tune_offset");
  OffsetConfig config;
  double lo = options.lo;
  double hi = options.hi;
  double previous_best = INFINITY;
  for (int iteration = 1; iteration <= options.max_iterations; ++iteration) {
    const double step = (hi - lo) / options.probes;
    double best_offset = 0.0;
    double best_ppl = INFINITY;
    for (int k = 1; k <= options.probes; ++k) {
      const double s = lo + k * step;
      double ppl = 0.0;
      try {
        ppl = Perplexity(model, dev, [s](const EncodedExample& ex) {
          return DirectiveFor(ControlMode::kOffset, ex, nullptr, s);
        });
      } catch (const NumericFailure& e) {
        throw NumericFailure("tune_offset probe s=" + std::to_string(s) + " (iteration " +
                             std::to_string(iteration) + "): " + e.what());
      }
      if (!std::isfinite(ppl)) {
        throw NumericFailure("tune_offset probe s=" + std::to_string(s) + " (iteration " +
                             std::to_string(iteration) + ") gave a non-finite perplexity");
      }
      config.trace.push_back({iteration, s, ppl});
      if (ppl < best_ppl) {
        best_ppl = ppl;
        best_offset = s;
      }
    }
    config.intervals.push_back({iteration, lo, hi, best_offset, best_ppl});
    if (best_ppl <= previous_best) config.offset = best_offset;
    if (std::abs(previous_best - best_ppl) < options.tolerance) {
      config.converged = true;
      break;
    }
    previous_best = std::min(previous_best, best_ppl);
    lo = std::max(0.0, best_offset - step);
    hi = best_offset + step;
  }
  return config;
}

std::vector<int> Steer(const Model& model, std::span<const int> source,
                       std::span<const SentenceSpan> spans,
                       std::span<const uint8_t> highlight, ControlMode mode,
                       const SteerParams& params) {
  if (mode == ControlMode::kVanilla) {
    return model.BeamSearch(source, ControlDirective::Vanilla(), params.decode);
  }
  if (highlight.size() != source.size()) {
    throw ContractError("steer: highlight has " + std::to_string(highlight.size()) +
                        " entries for " + std::to_string(source.size()) + " tokens");
  }
  ValidateSpans(spans, static_cast<int>(source.size()));
  MaskToSentences(spans, highlight);
  std::vector<uint8_t> mask(highlight.begin(), highlight.end());
  ControlDirective directive;
  switch (mode) {
    case ControlMode::kFocus:
      if (params.focus == nullptr) throw ContractError("steer: focus mode needs vectors");
      directive = ControlDirective::Focus(std::move(mask), *params.focus);
      break;
    case ControlMode::kOffset:
      directive = ControlDirective::Offset(std::move(mask), params.offset);
      break;
    case ControlMode::kPadding:
      directive = ControlDirective::Padding(std::move(mask));
      break;
    case ControlMode::kVanilla:
      break;
  }
  return model.BeamSearch(source, directive, params.decode);
}

}  // namespace focusvec
