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

// focusvec: data generation, training, annotation, evaluation and serving.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli_support.h"
#include "focusvec/attribution.h"
#include "focusvec/checkpoint.h"
#include "focusvec/control.h"
#include "focusvec/corpus.h"
#include "focusvec/errors.h"
#include "focusvec/evalkit.h"
#include "focusvec/model.h"
#include "focusvec/random.h"
#include "focusvec/service.h"
#include "focusvec/version.h"

namespace focusvec::cli {
namespace {

using nlohmann::json;

// Flag value if the flag was given, else the config value, else `fallback`.
template <typename T>
T Pick(const CLI::Option* flag, const T& flag_value, std::optional<T> config_value,
       const T& fallback) {
  if (flag != nullptr && flag->count() > 0) return flag_value;
  if (config_value) return *config_value;
  return fallback;
}

std::optional<int> AsInt(std::optional<int64_t> v) {
  if (!v) return std::nullopt;
  return static_cast<int>(*v);
}

std::optional<uint64_t> AsU64(std::optional<int64_t> v) {
  if (!v) return std::nullopt;
  return static_cast<uint64_t>(*v);
}

std::vector<int> ParseIndexList(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" ") == std::string::npos) continue;
    try {
      size_t used = 0;
      const int v = std::stoi(item, &used);
      if (item.find_first_not_of(" ", used) != std::string::npos) throw std::invalid_argument("");
      out.push_back(v);
    } catch (const std::exception&) {
      throw ContractError("invalid highlight index '" + item + "'");
    }
  }
  return out;
}

void Say(const std::string& line) {
  std::fputs(line.c_str(), stdout);
  std::fputc('\n', stdout);
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string out;
  int n = 5000;
  int facts = 4;
  uint64_t seed = 1;
  int slots = 8;
  int values = 8;
  int facts_per_target = 1;
  int dev_n = -1;
  int test_n = -1;
};

int RunGenData(const GenDataArgs& a) {
  namespace fs = std::filesystem;
  const int dev_n = a.dev_n >= 0 ? a.dev_n : a.n / 10;
  const int test_n = a.test_n >= 0 ? a.test_n : a.n / 10;
  const json config = {{"n", a.n},           {"facts", a.facts},
                       {"slots", a.slots},   {"values", a.values},
                       {"facts_per_target", a.facts_per_target},
                       {"dev_n", dev_n},     {"test_n", test_n}};
  Manifest manifest("gen-data", config, a.seed);
  fs::create_directories(a.out);
  const struct {
    const char* split;
    int n;
    uint64_t seed;
  } splits[] = {{"train", a.n, a.seed},
                {"dev", dev_n, SplitMix64(a.seed ^ 0xdefULL)},
                {"test", test_n, SplitMix64(a.seed ^ 0x7e57ULL)}};
  json counts = json::object();
  for (const auto& s : splits) {
    SynthOptions o;
    o.n_examples = s.n;
    o.n_facts_per_input = a.facts;
    o.n_slots = a.slots;
    o.n_values = a.values;
    o.facts_per_target = a.facts_per_target;
    o.seed = s.seed;
    o.id_prefix = s.split;
    const std::string path = (fs::path(a.out) / (std::string(s.split) + ".jsonl")).string();
    SaveJsonl(SynthGenerate(o), path);
    manifest.AddOutput(path);
    counts[s.split] = s.n;
  }
  manifest.SetMetrics({{"examples", counts}});
  manifest.Write(a.out);
  Say("wrote " + std::to_string(a.n) + "/" + std::to_string(dev_n) + "/" +
      std::to_string(test_n) + " examples to " + a.out);
  return 0;
}

// ---------------------------------------------------------------------------
// train-base

struct TrainBaseArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string variant = "standard";
  uint64_t seed = 1;
  int epochs = 0;
  double lr = 0;
  CLI::Option* variant_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* lr_opt = nullptr;
};

constexpr int kDefaultBaseEpochs = 24;

int RunTrainBase(const TrainBaseArgs& a) {
  const KeyValues cfg = a.config.empty() ? KeyValues() : KeyValues::Load(a.config);
  cfg.CheckKeys({"encoder_layers", "decoder_layers", "d_model", "heads", "d_ff",
                 "max_positions", "lr", "batch_size", "epochs", "seed", "weight_decay",
                 "clip_norm", "variant", "p_pad"});
  ModelConfig mc;
  mc.encoder_layers = AsInt(cfg.GetInt("encoder_layers")).value_or(mc.encoder_layers);
  mc.decoder_layers = AsInt(cfg.GetInt("decoder_layers")).value_or(mc.decoder_layers);
  mc.d_model = AsInt(cfg.GetInt("d_model")).value_or(mc.d_model);
  mc.heads = AsInt(cfg.GetInt("heads")).value_or(mc.heads);
  mc.d_ff = AsInt(cfg.GetInt("d_ff")).value_or(mc.d_ff);
  mc.max_positions = AsInt(cfg.GetInt("max_positions")).value_or(mc.max_positions);
  TrainOptions to;
  to.lr = Pick(a.lr_opt, a.lr, cfg.GetDouble("lr"), to.lr);
  to.batch_size = AsInt(cfg.GetInt("batch_size")).value_or(to.batch_size);
  to.epochs = Pick(a.epochs_opt, a.epochs, AsInt(cfg.GetInt("epochs")), kDefaultBaseEpochs);
  to.seed = Pick(a.seed_opt, a.seed, AsU64(cfg.GetInt("seed")), to.seed);
  to.weight_decay = cfg.GetDouble("weight_decay").value_or(to.weight_decay);
  to.clip_norm = cfg.GetDouble("clip_norm").value_or(to.clip_norm);
  to.p_pad = cfg.GetDouble("p_pad").value_or(to.p_pad);
  const std::string variant =
      Pick(a.variant_opt, a.variant, cfg.Get("variant"), std::string("standard"));
  if (variant == "standard") {
    to.variant = TrainVariant::kStandard;
  } else if (variant == "random-padding") {
    to.variant = TrainVariant::kRandomPadding;
  } else {
    throw ContractError("unknown variant '" + variant + "' (standard or random-padding)");
  }

  const std::string train_path = ResolveData(a.data, "train");
  const Dataset train = LoadJsonl(train_path);
  if (train.empty()) throw ContractError("train-base: empty dataset '" + train_path + "'");
  const Vocab vocab = Vocab::Build(CorpusTexts(train));
  mc.vocab_size = vocab.size();
  mc.Validate();

  json config = mc.ToJson();
  config["lr"] = to.lr;
  config["batch_size"] = to.batch_size;
  config["epochs"] = to.epochs;
  config["weight_decay"] = to.weight_decay;
  config["clip_norm"] = to.clip_norm;
  config["variant"] = variant;
  if (to.variant == TrainVariant::kRandomPadding) config["p_pad"] = to.p_pad;
  Manifest manifest("train-base", config, to.seed);
  manifest.AddInput(train_path);

  to.on_epoch = [](int epoch, double loss, const Model&) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "epoch %d mean token nll %.6f", epoch + 1, loss);
    Say(buf);
  };
  const TrainResult result = TrainBase(EncodeDataset(train, vocab), mc, to);
  SaveModel(a.out, result.model, vocab, {{"train_config", config}, {"seed", to.seed}});
  std::string curve = "step,loss\n";
  for (size_t i = 0; i < result.loss_curve.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%.12g\n", i + 1, result.loss_curve[i]);
    curve += buf;
  }
  WriteFileAtomic(a.out + ".loss.csv", curve);
  manifest.AddOutput(a.out);
  manifest.AddOutput(a.out + ".loss.csv");

  json metrics = {{"final_step_loss",
                   result.loss_curve.empty() ? 0.0 : result.loss_curve.back()}};
  const std::string dev_path = ResolveData(a.data, "dev");
  if (dev_path != train_path && std::filesystem::exists(dev_path)) {
    const auto dev = EncodeDataset(LoadJsonl(dev_path), vocab);
    if (!dev.empty()) {
      manifest.AddInput(dev_path);
      const TokenAccuracy all = NextTokenAccuracy(result.model, dev, 0);
      const TokenAccuracy after_first = NextTokenAccuracy(result.model, dev, 1);
      metrics["dev_next_token_accuracy"] = all.value();
      metrics["dev_next_token_accuracy_after_first"] = after_first.value();
      Say("dev next-token accuracy " + std::to_string(all.value()) + " (positions >= 1: " +
          std::to_string(after_first.value()) + ")");
    }
  }
  manifest.SetMetrics(metrics);
  manifest.Write(a.out);
  Say("wrote " + a.out);
  return 0;
}

// ---------------------------------------------------------------------------
// annotate

struct AnnotateArgs {
  std::string ckpt;
  std::string data;
  std::string method = "loo";
  int k_min = 1;
  int k_max = 1;
  uint64_t seed = 1;
  std::string out;
  int limit = -1;
};

int RunAnnotate(const AnnotateArgs& a) {
  const LoadedModel loaded = LoadModel(a.ckpt);
  const std::string data_path = ResolveData(a.data, "train");
  Dataset data = LoadJsonl(data_path);
  if (a.limit >= 0 && static_cast<size_t>(a.limit) < data.size()) data.resize(a.limit);
  AnnotateOptions o;
  o.method = ParseAttributionMethod(a.method);
  o.k_min = a.k_min;
  o.k_max = a.k_max;
  o.seed = a.seed;
  const json config = {{"method", AttributionMethodName(o.method)},
                       {"k_min", a.k_min},
                       {"k_max", a.k_max},
                       {"limit", a.limit}};
  Manifest manifest("annotate", config, a.seed);
  manifest.AddInput(a.ckpt);
  manifest.AddInput(data_path);
  const auto annotations = AnnotateTopK(loaded.model, loaded.vocab, data, o);
  WriteFileAtomic(a.out, FormatAnnotations(annotations));
  manifest.AddOutput(a.out);
  // Agreement with gold highlights when the data carries them.
  int64_t with_gold = 0, hits = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    if (!data[i].highlights || data[i].highlights->empty()) continue;
    ++with_gold;
    const auto ranking = RankScores(annotations[i].scores);
    const auto& gold = *data[i].highlights;
    if (std::find(gold.begin(), gold.end(), ranking[0]) != gold.end()) ++hits;
  }
  json metrics = {{"examples", data.size()}};
  if (with_gold > 0) {
    metrics["top1_precision"] = 100.0 * static_cast<double>(hits) / with_gold;
    Say("top-1 precision against gold " + std::to_string(100.0 * hits / with_gold) + "%");
  }
  manifest.SetMetrics(metrics);
  manifest.Write(a.out);
  Say("wrote " + std::to_string(annotations.size()) + " annotations to " + a.out);
  return 0;
}

// ---------------------------------------------------------------------------
// train-focus

struct TrainFocusArgs {
  std::string ckpt;
  std::string ann;
  std::string out;
  std::string dev;
  std::string config;
  std::string layers = "all";
  bool grid = false;
  double joint_lr = 0;
  double lr = 0;
  int epochs = 0;
  uint64_t seed = 1;
  CLI::Option* layers_opt = nullptr;
  CLI::Option* grid_opt = nullptr;
  CLI::Option* joint_opt = nullptr;
  CLI::Option* lr_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

int RunTrainFocus(const TrainFocusArgs& a) {
  const KeyValues cfg = a.config.empty() ? KeyValues() : KeyValues::Load(a.config);
  cfg.CheckKeys({"lr", "epochs", "batch_size", "seed", "weight_decay", "clip_norm", "layers",
                 "grid", "joint_lr", "joint_finetune"});
  FocusTrainOptions o;
  o.lr = Pick(a.lr_opt, a.lr, cfg.GetDouble("lr"), o.lr);
  o.epochs = Pick(a.epochs_opt, a.epochs, AsInt(cfg.GetInt("epochs")), o.epochs);
  o.batch_size = AsInt(cfg.GetInt("batch_size")).value_or(o.batch_size);
  o.seed = Pick(a.seed_opt, a.seed, AsU64(cfg.GetInt("seed")), o.seed);
  o.weight_decay = cfg.GetDouble("weight_decay").value_or(o.weight_decay);
  o.clip_norm = cfg.GetDouble("clip_norm").value_or(o.clip_norm);
  o.layer_scope = ParseLayerScope(
      Pick(a.layers_opt, a.layers, cfg.Get("layers"), std::string("all")));
  o.grid = Pick(a.grid_opt, a.grid, cfg.GetBool("grid"), false);
  if (a.joint_opt->count() > 0 || cfg.Has("joint_lr") ||
      cfg.GetBool("joint_finetune").value_or(false)) {
    o.joint_finetune = true;
    if (a.joint_opt->count() > 0) {
      o.model_lr = a.joint_lr;
    } else if (auto v = cfg.GetDouble("joint_lr")) {
      o.model_lr = *v;
    }
  }

  LoadedModel loaded = LoadModel(a.ckpt);
  const Dataset ann = LoadJsonl(a.ann);
  const auto train = EncodeDataset(ann, loaded.vocab);
  std::optional<std::vector<EncodedExample>> dev;
  std::string dev_path;
  if (!a.dev.empty()) {
    dev_path = ResolveData(a.dev, "dev");
    dev = EncodeDataset(LoadJsonl(dev_path), loaded.vocab);
  }

  json config = {{"lr", o.lr},
                 {"epochs", o.epochs},
                 {"batch_size", o.batch_size},
                 {"weight_decay", o.weight_decay},
                 {"clip_norm", o.clip_norm},
                 {"layers", LayerScopeName(o.layer_scope)},
                 {"grid", o.grid},
                 {"joint_finetune", o.joint_finetune}};
  if (o.joint_finetune) config["joint_lr"] = o.model_lr.value_or(0.1 * o.lr);
  Manifest manifest("train-focus", config, o.seed);
  manifest.AddInput(a.ckpt);
  manifest.AddInput(a.ann);
  if (dev) manifest.AddInput(dev_path);

  o.on_epoch = [](int epoch, double loss) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "epoch %d mean token nll %.6f", epoch + 1, loss);
    Say(buf);
  };
  const FocusTrainResult result =
      TrainFocus(loaded.model, train, dev ? &*dev : nullptr, o);
  SaveFocusVectors(a.out, result.vectors, {{"train_config", config}});
  manifest.AddOutput(a.out);
  const json report = result.report.ToJson();
  WriteFileAtomic(a.out + ".report.json", report.dump(2) + "\n");
  manifest.AddOutput(a.out + ".report.json");
  if (result.model) {
    SaveModel(a.out + ".model", *result.model, loaded.vocab,
              {{"joint_finetune_of", a.ckpt}});
    manifest.AddOutput(a.out + ".model");
  }
  json metrics = {{"lr", result.report.lr}, {"steps", result.report.steps}};
  if (result.report.dev_ppl_vanilla) {
    metrics["dev_ppl_vanilla"] = *result.report.dev_ppl_vanilla;
    metrics["dev_ppl_focus"] = *result.report.dev_ppl_focus;
    Say("dev ppl vanilla " + std::to_string(*result.report.dev_ppl_vanilla) + ", focus " +
        std::to_string(*result.report.dev_ppl_focus));
  }
  manifest.SetMetrics(metrics);
  manifest.Write(a.out);
  Say("wrote " + a.out);
  return 0;
}

// ---------------------------------------------------------------------------
// tune-offset

struct TuneOffsetArgs {
  std::string ckpt;
  std::string dev;
  std::string out;
  int limit = -1;
};

int RunTuneOffset(const TuneOffsetArgs& a) {
  const LoadedModel loaded = LoadModel(a.ckpt);
  const std::string dev_path = ResolveData(a.dev, "dev");
  Dataset data = LoadJsonl(dev_path);
  if (a.limit >= 0 && static_cast<size_t>(a.limit) < data.size()) data.resize(a.limit);
  OffsetTuneOptions o;
  const json config = {{"lo", o.lo},           {"hi", o.hi},
                       {"probes", o.probes},   {"tolerance", o.tolerance},
                       {"max_iterations", o.max_iterations}, {"limit", a.limit}};
  Manifest manifest("tune-offset", config, 0);
  manifest.AddInput(a.ckpt);
  manifest.AddInput(dev_path);
  const OffsetConfig tuned = TuneOffset(loaded.model, EncodeDataset(data, loaded.vocab), o);
  SaveOffsetConfig(a.out, tuned);
  manifest.AddOutput(a.out);
  manifest.SetMetrics({{"offset", tuned.offset},
                       {"converged", tuned.converged},
                       {"iterations", tuned.intervals.size()},
                       {"best_ppl", tuned.intervals.empty() ? 0.0
                                                            : tuned.intervals.back().best_ppl}});
  manifest.Write(a.out);
  Say("tuned offset " + std::to_string(tuned.offset) + (tuned.converged ? "" : " (not converged)"));
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string ckpt;
  std::string data;
  std::string mode = "vanilla";
  std::string fv;
  std::string offset;
  std::string report;
  int beam = 4;
  int max_len = 32;
  int limit = -1;
  bool generations = false;
};

int RunEvaluate(const EvaluateArgs& a) {
  const LoadedModel loaded = LoadModel(a.ckpt);
  const std::string data_path = ResolveData(a.data, "test");
  Dataset data = LoadJsonl(data_path);
  if (a.limit >= 0 && static_cast<size_t>(a.limit) < data.size()) data.resize(a.limit);
  if (data.empty()) throw ContractError("evaluate: empty dataset");
  const ControlMode mode = ParseControlMode(a.mode);
  std::optional<FocusVectors> fv;
  double offset = 0.0;
  if (mode == ControlMode::kFocus) {
    if (a.fv.empty()) throw ContractError("evaluate: --mode focus needs --fv");
    fv = LoadFocusVectors(a.fv);
  }
  if (mode == ControlMode::kOffset) {
    if (a.offset.empty()) throw ContractError("evaluate: --mode offset needs --offset");
    offset = LoadOffsetConfig(a.offset).offset;
  }
  const json config = {{"mode", ControlModeName(mode)},
                       {"beam", a.beam},
                       {"max_len", a.max_len},
                       {"limit", a.limit}};
  Manifest manifest("evaluate", config, 0);
  manifest.AddInput(a.ckpt);
  manifest.AddInput(data_path);
  if (fv) manifest.AddInput(a.fv);
  if (mode == ControlMode::kOffset) manifest.AddInput(a.offset);

  const auto encoded = EncodeDataset(data, loaded.vocab);
  const FocusVectors* fv_ptr = fv ? &*fv : nullptr;
  auto directive_for = [&](const EncodedExample& ex) {
    if (mode != ControlMode::kVanilla && ex.highlights.empty()) {
      throw ContractError("evaluate: example '" + ex.id + "' has no highlights for mode " +
                          std::string(ControlModeName(mode)));
    }
    return DirectiveFor(mode, ex, fv_ptr, offset);
  };
  const NllTotals totals = DatasetNll(loaded.model, encoded, directive_for);

  DecodeOptions decode;
  decode.beam_width = a.beam;
  decode.max_len = a.max_len;
  std::vector<std::string> generations;
  RougeScore r1, r2, rl;
  for (size_t i = 0; i < encoded.size(); ++i) {
    const auto out = loaded.model.BeamSearch(encoded[i].source, directive_for(encoded[i]), decode);
    generations.push_back(loaded.vocab.Decode(out));
    const auto add = [](RougeScore& acc, const RougeScore& s) {
      acc.precision += s.precision;
      acc.recall += s.recall;
      acc.f1 += s.f1;
    };
    add(r1, Rouge(generations.back(), data[i].target, RougeVariant::kRouge1));
    add(r2, Rouge(generations.back(), data[i].target, RougeVariant::kRouge2));
    add(rl, Rouge(generations.back(), data[i].target, RougeVariant::kRougeL));
  }
  const double n = static_cast<double>(encoded.size());
  auto rouge_json = [n](const RougeScore& s) {
    return json{{"precision", s.precision / n}, {"recall", s.recall / n}, {"f1", s.f1 / n}};
  };
  json report = {{"mode", ControlModeName(mode)},
                 {"examples", encoded.size()},
                 {"beam", a.beam},
                 {"tokens", totals.tokens},
                 {"nll_per_token", totals.MeanNll()},
                 {"ppl", totals.Perplexity()},
                 {"rouge1", rouge_json(r1)},
                 {"rouge2", rouge_json(r2)},
                 {"rougeL", rouge_json(rl)}};
  if (mode == ControlMode::kOffset) report["offset"] = offset;
  std::optional<BinomialEstimate> steering;
  try {
    steering = SteeringAccuracy(generations, data);
    report["steering_accuracy"] = steering->ToJson();
  } catch (const ContractError&) {
    report["steering_accuracy"] = nullptr;
  }
  if (a.generations) report["generations"] = generations;
  WriteFileAtomic(a.report, report.dump(2) + "\n");
  manifest.AddOutput(a.report);
  manifest.SetMetrics({{"ppl", totals.Perplexity()},
                       {"steering_accuracy", steering ? json(steering->value()) : json()}});
  manifest.Write(a.report);

  char buf[256];
  Say("metric              value");
  std::snprintf(buf, sizeof(buf), "mode                %s", std::string(ControlModeName(mode)).c_str());
  Say(buf);
  std::snprintf(buf, sizeof(buf), "examples            %zu", encoded.size());
  Say(buf);
  std::snprintf(buf, sizeof(buf), "ppl                 %.6f", totals.Perplexity());
  Say(buf);
  std::snprintf(buf, sizeof(buf), "rouge1_f1           %.6f", r1.f1 / n);
  Say(buf);
  std::snprintf(buf, sizeof(buf), "rouge2_f1           %.6f", r2.f1 / n);
  Say(buf);
  std::snprintf(buf, sizeof(buf), "rougeL_f1           %.6f", rl.f1 / n);
  Say(buf);
  if (steering) {
    std::snprintf(buf, sizeof(buf), "steering_accuracy   %.6f (%lld/%lld)", steering->value(),
                  static_cast<long long>(steering->successes),
                  static_cast<long long>(steering->trials));
    Say(buf);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string ckpt;
  std::string fv;
  std::string offset;
  std::string input;
  std::string highlights;
  std::string mode = "vanilla";
  int beam = 4;
  int max_len = 32;
};

int RunGenerate(const GenerateArgs& a) {
  const LoadedModel loaded = LoadModel(a.ckpt);
  const ControlMode mode = ParseControlMode(a.mode);
  std::optional<FocusVectors> fv;
  SteerParams params;
  params.decode.beam_width = a.beam;
  params.decode.max_len = a.max_len;
  if (mode == ControlMode::kFocus) {
    if (a.fv.empty()) throw ContractError("generate: --mode focus needs --fv");
    fv = LoadFocusVectors(a.fv);
    params.focus = &*fv;
  }
  if (mode == ControlMode::kOffset) {
    if (a.offset.empty()) throw ContractError("generate: --mode offset needs --offset");
    params.offset = LoadOffsetConfig(a.offset).offset;
  }
  const auto tokens = Tokenize(ReadFile(a.input));
  if (tokens.empty()) throw ContractError("generate: input is empty");
  const auto spans = SentenceSplit(tokens);
  const auto highlights = ParseIndexList(a.highlights);
  for (int h : highlights) {
    if (h < 0 || h >= static_cast<int>(spans.size())) {
      throw ContractError("generate: highlight index " + std::to_string(h) +
                          " is out of range for " + std::to_string(spans.size()) +
                          " sentences");
    }
  }
  std::vector<int> ids;
  for (const auto& t : tokens) ids.push_back(loaded.vocab.Id(t));
  const auto out =
      Steer(loaded.model, ids, spans, HighlightMask(spans, highlights), mode, params);
  Say(loaded.vocab.Decode(out));
  return 0;
}

// ---------------------------------------------------------------------------
// serve

struct ServeArgs {
  std::string ckpt;
  std::string fv;
  std::string offset;
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 4;
  int beam = 4;
  std::string static_dir;
};

int RunServe(const ServeArgs& a) {
  LoadedModel loaded = LoadModel(a.ckpt);
  ServiceArtifacts artifacts{std::move(loaded.model), std::move(loaded.vocab), std::nullopt,
                             std::nullopt};
  if (!a.fv.empty()) artifacts.focus = LoadFocusVectors(a.fv);
  if (!a.offset.empty()) artifacts.offset = LoadOffsetConfig(a.offset);
  ServiceOptions options;
  options.host = a.host;
  options.port = a.port;
  options.workers = a.workers;
  options.static_dir = a.static_dir;
  options.decode.beam_width = a.beam;
  Service service(std::move(artifacts), options);
  const int port = service.Bind();
  Say(json{{"listening", a.host + ":" + std::to_string(port)}, {"port", port}}.dump());
  service.Run();
  return 0;
}

void PrintError(const std::string& kind, const std::string& message, int exit_code,
                std::optional<int> line = std::nullopt) {
  json err = {{"error", {{"kind", kind}, {"message", message}, {"exit_code", exit_code}}}};
  if (line) err["error"]["line"] = *line;
  std::fputs((err.dump() + "\n").c_str(), stderr);
}

int Main(int argc, char** argv) {
  CLI::App app{"focusvec: steer a sequence-to-sequence model with sentence highlights"};
  app.set_version_flag("--version", std::string(Version()));
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic fact-copy task");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--n", gen.n, "Training examples")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--facts", gen.facts, "Fact sentences per input");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--slots", gen.slots, "Attribute slots");
  gen_cmd->add_option("--values", gen.values, "Values per attribute");
  gen_cmd->add_option("--facts-per-target", gen.facts_per_target, "Facts rendered per target");
  gen_cmd->add_option("--dev-n", gen.dev_n, "Dev examples (default n/10)");
  gen_cmd->add_option("--test-n", gen.test_n, "Test examples (default n/10)");

  TrainBaseArgs tb;
  auto* tb_cmd = app.add_subcommand("train-base", "Train the base model");
  tb_cmd->add_option("--data", tb.data, "Dataset file or directory")->required();
  tb_cmd->add_option("--config", tb.config, "key=value hyperparameter file");
  tb_cmd->add_option("--out", tb.out, "Output checkpoint")->required();
  tb.variant_opt = tb_cmd->add_option("--variant", tb.variant, "standard or random-padding");
  tb.seed_opt = tb_cmd->add_option("--seed", tb.seed, "Random seed");
  tb.epochs_opt = tb_cmd->add_option("--epochs", tb.epochs, "Training epochs");
  tb.lr_opt = tb_cmd->add_option("--lr", tb.lr, "Learning rate");

  AnnotateArgs an;
  auto* an_cmd = app.add_subcommand("annotate", "Highlight top-k attributed sentences");
  an_cmd->add_option("--ckpt", an.ckpt, "Model checkpoint")->required();
  an_cmd->add_option("--data", an.data, "Dataset file or directory")->required();
  an_cmd->add_option("--method", an.method, "loo, attn, gradnorm or gradinput");
  an_cmd->add_option("--k-min", an.k_min, "Smallest k");
  an_cmd->add_option("--k-max", an.k_max, "Largest k");
  an_cmd->add_option("--seed", an.seed, "Seed for drawing k");
  an_cmd->add_option("--out", an.out, "Output JSONL")->required();
  an_cmd->add_option("--limit", an.limit, "Annotate only the first N examples");

  TrainFocusArgs tf;
  auto* tf_cmd = app.add_subcommand("train-focus", "Train focus vectors on a frozen model");
  tf_cmd->add_option("--ckpt", tf.ckpt, "Model checkpoint")->required();
  tf_cmd->add_option("--ann", tf.ann, "Annotated JSONL")->required();
  tf_cmd->add_option("--out", tf.out, "Output focus vectors")->required();
  tf_cmd->add_option("--dev", tf.dev, "Dev set with highlights (file or directory)");
  tf_cmd->add_option("--config", tf.config, "key=value hyperparameter file");
  tf.layers_opt = tf_cmd->add_option("--layers", tf.layers, "all, first or last");
  tf.grid_opt = tf_cmd->add_flag("--grid", tf.grid, "Search the learning-rate grid");
  tf.joint_opt = tf_cmd->add_option("--joint-lr", tf.joint_lr,
                                    "Also finetune the model at this learning rate");
  tf.lr_opt = tf_cmd->add_option("--lr", tf.lr, "Focus-vector learning rate");
  tf.epochs_opt = tf_cmd->add_option("--epochs", tf.epochs, "Training epochs");
  tf.seed_opt = tf_cmd->add_option("--seed", tf.seed, "Random seed");

  TuneOffsetArgs to;
  auto* to_cmd = app.add_subcommand("tune-offset", "Tune the attention offset on dev");
  to_cmd->add_option("--ckpt", to.ckpt, "Model checkpoint")->required();
  to_cmd->add_option("--dev", to.dev, "Dev set with highlights")->required();
  to_cmd->add_option("--out", to.out, "Output JSON")->required();
  to_cmd->add_option("--limit", to.limit, "Use only the first N dev examples");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Evaluate a control mode");
  ev_cmd->add_option("--ckpt", ev.ckpt, "Model checkpoint")->required();
  ev_cmd->add_option("--data", ev.data, "Dataset file or directory")->required();
  ev_cmd->add_option("--mode", ev.mode, "vanilla, focus, offset or padding");
  ev_cmd->add_option("--fv", ev.fv, "Focus vectors");
  ev_cmd->add_option("--offset", ev.offset, "Offset config");
  ev_cmd->add_option("--report", ev.report, "Output report JSON")->required();
  ev_cmd->add_option("--beam", ev.beam, "Beam width")->check(CLI::PositiveNumber);
  ev_cmd->add_option("--max-len", ev.max_len, "Maximum generated tokens");
  ev_cmd->add_option("--limit", ev.limit, "Evaluate only the first N examples");
  ev_cmd->add_flag("--generations", ev.generations, "Include generations in the report");

  GenerateArgs ge;
  auto* ge_cmd = app.add_subcommand("generate", "Generate from a text file");
  ge_cmd->add_option("--ckpt", ge.ckpt, "Model checkpoint")->required();
  ge_cmd->add_option("--fv", ge.fv, "Focus vectors");
  ge_cmd->add_option("--offset", ge.offset, "Offset config");
  ge_cmd->add_option("--input", ge.input, "Input text file")->required();
  ge_cmd->add_option("--highlights", ge.highlights, "Comma-separated sentence indices");
  ge_cmd->add_option("--mode", ge.mode, "vanilla, focus, offset or padding");
  ge_cmd->add_option("--beam", ge.beam, "Beam width")->check(CLI::PositiveNumber);
  ge_cmd->add_option("--max-len", ge.max_len, "Maximum generated tokens");

  ServeArgs sv;
  auto* sv_cmd = app.add_subcommand("serve", "Serve the HTTP API");
  sv_cmd->add_option("--ckpt", sv.ckpt, "Model checkpoint")->required();
  sv_cmd->add_option("--fv", sv.fv, "Focus vectors");
  sv_cmd->add_option("--offset", sv.offset, "Offset config");
  sv_cmd->add_option("--host", sv.host, "Bind address");
  sv_cmd->add_option("--port", sv.port, "Port (0 picks a free one)");
  sv_cmd->add_option("--workers", sv.workers, "Concurrent request limit");
  sv_cmd->add_option("--beam", sv.beam, "Default beam width");
  sv_cmd->add_option("--static", sv.static_dir, "Directory served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    PrintError("usage", e.what(), 1);
    return 1;
  }

  try {
    if (*gen_cmd) return RunGenData(gen);
    if (*tb_cmd) return RunTrainBase(tb);
    if (*an_cmd) return RunAnnotate(an);
    if (*tf_cmd) return RunTrainFocus(tf);
    if (*to_cmd) return RunTuneOffset(to);
    if (*ev_cmd) return RunEvaluate(ev);
    if (*ge_cmd) return RunGenerate(ge);
    if (*sv_cmd) return RunServe(sv);
  } catch (const NumericFailure& e) {
    PrintError("numeric", e.what(), 2);
    return 2;
  } catch (const ParseError& e) {
    PrintError("parse", e.what(), 1, e.line() > 0 ? std::optional<int>(e.line()) : std::nullopt);
    return 1;
  } catch (const Error& e) {
    PrintError(ErrorKindName(e.kind()), e.what(), 1);
    return 1;
  } catch (const std::exception& e) {
    PrintError("io", e.what(), 1);
    return 1;
  }
  return 1;
}

}  // namespace
}  // namespace focusvec::cli

int main(int argc, char** argv) { return focusvec::cli::Main(argc, argv); }
