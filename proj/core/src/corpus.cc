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

#include "focusvec/corpus.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <iomanip>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "focusvec/checkpoint.h"
#include "focusvec/errors.h"
#include "focusvec/random.h"

namespace focusvec {
namespace {

const std::array<std::string_view, 4> kReservedTokens = {"<pad>", "<s>", "</s>",
                                                         "<unk>"};

const std::vector<std::string_view> kEntities = {
    "alice", "bob",   "carol",   "dave",  "erin",  "frank", "grace", "heidi",
    "ivan",  "judy",  "mallory", "nina",  "oscar", "peggy", "rupert", "sybil"};

struct Slot {
  std::string_view attribute;
  std::vector<std::string_view> values;
};

const std::vector<Slot> kSlots = {
    {"color", {"red", "blue", "green", "yellow", "purple", "orange", "black", "white"}},
    {"city", {"paris", "tokyo", "lima", "cairo", "oslo", "delhi", "rome", "quito"}},
    {"pet", {"dog", "cat", "parrot", "hamster", "rabbit", "turtle", "goldfish", "lizard"}},
    {"food", {"pizza", "sushi", "tacos", "pasta", "curry", "salad", "soup", "bread"}},
    {"sport", {"tennis", "soccer", "hockey", "rugby", "golf", "cricket", "boxing", "rowing"}},
    {"job", {"doctor", "pilot", "farmer", "teacher", "lawyer", "chef", "baker", "nurse"}},
    {"drink", {"tea", "coffee", "juice", "milk", "cocoa", "soda", "water", "lemonade"}},
    {"hobby", {"chess", "painting", "hiking", "knitting", "fishing", "dancing", "singing",
               "reading"}},
};

const std::vector<std::string_view> kDistractors = {
    "it was a quiet day .",
    "nothing else happened that week .",
    "everyone was in a good mood .",
    "the meeting ended early .",
    "it rained all afternoon .",
};

std::string FactSentence(std::string_view entity, std::string_view attribute,
                         std::string_view value) {
  std::string s = "the ";
  s += attribute;
  s += " of ";
  s += entity;
  s += " is ";
  s += value;
  s += " .";
  return s;
}

// Partial Fisher-Yates: the first k entries of a shuffled 0..n-1.
std::vector<int> SampleDistinct(Rng& rng, int n, int k) {
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  for (int i = 0; i < k; ++i) {
    const int j = i + rng.UniformInt(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string JoinTokens(std::span<const std::string> tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
  for (auto t : kReservedTokens) {
    index_.emplace(std::string(t), static_cast<int>(tokens_.size()));
    tokens_.emplace_back(t);
  }
}

Vocab Vocab::Build(std::span<const std::string> texts) {
  if (texts.empty()) throw ContractError("build_vocab: empty corpus");
  std::map<std::string, int64_t> counts;
  for (const auto& text : texts) {
    for (auto& tok : Tokenize(text)) ++counts[tok];
  }
  std::vector<std::pair<std::string, int64_t>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [tok, n] : sorted) {
    if (v.index_.count(tok)) continue;
    v.index_.emplace(tok, v.size());
    v.tokens_.push_back(tok);
  }
  return v;
}

Vocab Vocab::FromTokens(std::vector<std::string> tokens) {
  if (tokens.size() < kReservedTokens.size()) {
    throw ParseError("vocabulary is missing reserved tokens");
  }
  for (size_t i = 0; i < kReservedTokens.size(); ++i) {
    if (tokens[i] != kReservedTokens[i]) {
      throw ParseError("vocabulary reserved token " + std::to_string(i) +
                       " is '" + tokens[i] + "'");
    }
  }
  Vocab v;
  v.tokens_.clear();
  v.index_.clear();
  for (auto& tok : tokens) {
    if (!v.index_.emplace(tok, v.size()).second) {
      throw ParseError("duplicate vocabulary token '" + tok + "'");
    }
    v.tokens_.push_back(std::move(tok));
  }
  return v;
}

int Vocab::Id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocab::Token(int id) const {
  if (id < 0 || id >= size()) throw ContractError("token id out of range");
  return tokens_[id];
}

std::vector<int> Vocab::Encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& tok : Tokenize(text)) ids.push_back(Id(tok));
  return ids;
}

std::string Vocab::Decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kPadId || id == kBosId || id == kEosId) continue;
    if (!out.empty()) out += ' ';
    out += Token(id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sentences

std::vector<SentenceSpan> SentenceSplit(std::span<const std::string> tokens) {
  if (tokens.empty()) throw ContractError("sentence_split: empty input");
  std::vector<SentenceSpan> spans;
  int begin = 0;
  const int n = static_cast<int>(tokens.size());
  for (int i = 0; i < n; ++i) {
    if (tokens[i] == kSentenceDelimiter) {
      spans.push_back({static_cast<int>(spans.size()), begin, i + 1});
      begin = i + 1;
    }
  }
  if (begin < n) spans.push_back({static_cast<int>(spans.size()), begin, n});
  return spans;
}

std::vector<SentenceSpan> SentenceSplitIds(std::span<const int> ids, int period_id) {
  if (ids.empty()) throw ContractError("sentence_split: empty input");
  std::vector<SentenceSpan> spans;
  int begin = 0;
  const int n = static_cast<int>(ids.size());
  for (int i = 0; i < n; ++i) {
    if (ids[i] == period_id) {
      spans.push_back({static_cast<int>(spans.size()), begin, i + 1});
      begin = i + 1;
    }
  }
  if (begin < n) spans.push_back({static_cast<int>(spans.size()), begin, n});
  return spans;
}

void ValidateSpans(std::span<const SentenceSpan> spans, int n_tokens) {
  int expected = 0;
  for (size_t i = 0; i < spans.size(); ++i) {
    const auto& s = spans[i];
    if (s.index != static_cast<int>(i) || s.begin != expected || s.end <= s.begin) {
      throw ContractError("sentence spans do not partition the input");
    }
    expected = s.end;
  }
  if (expected != n_tokens) {
    throw ContractError("sentence spans cover " + std::to_string(expected) +
                        " of " + std::to_string(n_tokens) + " tokens");
  }
}

std::vector<uint8_t> HighlightMask(std::span<const SentenceSpan> spans,
                                   std::span<const int> sentence_indices) {
  const int n = spans.empty() ? 0 : spans.back().end;
  std::vector<uint8_t> mask(n, 0);
  for (int idx : sentence_indices) {
    if (idx < 0 || idx >= static_cast<int>(spans.size())) {
      throw ContractError("highlight index " + std::to_string(idx) +
                          " out of range for " + std::to_string(spans.size()) +
                          " sentences");
    }
    for (int i = spans[idx].begin; i < spans[idx].end; ++i) mask[i] = 1;
  }
  return mask;
}

std::vector<int> MaskToSentences(std::span<const SentenceSpan> spans,
                                 std::span<const uint8_t> mask) {
  const int n = spans.empty() ? 0 : spans.back().end;
  if (static_cast<int>(mask.size()) != n) {
    throw ContractError("highlight mask has " + std::to_string(mask.size()) +
                        " entries for " + std::to_string(n) + " tokens");
  }
  std::vector<int> out;
  for (const auto& s : spans) {
    int on = 0;
    for (int i = s.begin; i < s.end; ++i) on += mask[i] ? 1 : 0;
    if (on != 0 && on != s.length()) {
      throw ContractError("highlight splits sentence " + std::to_string(s.index));
    }
    if (on) out.push_back(s.index);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Examples

EncodedExample EncodeExample(const Example& example, const Vocab& vocab) {
  EncodedExample enc;
  enc.id = example.id;
  for (const auto& sentence : example.input_sentences) {
    const auto ids = vocab.Encode(sentence);
    if (ids.empty()) throw ContractError("example " + example.id + " has an empty sentence");
    const int begin = static_cast<int>(enc.source.size());
    enc.source.insert(enc.source.end(), ids.begin(), ids.end());
    enc.spans.push_back({static_cast<int>(enc.spans.size()), begin,
                         static_cast<int>(enc.source.size())});
  }
  if (enc.source.empty()) throw ContractError("example " + example.id + " has no input");
  enc.target = vocab.Encode(example.target);
  enc.target.push_back(kEosId);
  if (example.highlights) {
    enc.highlights = *example.highlights;
    for (int h : enc.highlights) {
      if (h < 0 || h >= static_cast<int>(enc.spans.size())) {
        throw ContractError("example " + example.id + ": highlight " +
                            std::to_string(h) + " out of range");
      }
    }
  }
  return enc;
}

std::vector<EncodedExample> EncodeDataset(const Dataset& dataset, const Vocab& vocab) {
  std::vector<EncodedExample> out;
  out.reserve(dataset.size());
  for (const auto& ex : dataset) out.push_back(EncodeExample(ex, vocab));
  return out;
}

std::vector<std::string> CorpusTexts(const Dataset& dataset) {
  std::vector<std::string> texts;
  for (const auto& ex : dataset) {
    for (const auto& s : ex.input_sentences) texts.push_back(s);
    texts.push_back(ex.target);
  }
  return texts;
}

// ---------------------------------------------------------------------------
// JSONL

Dataset ParseJsonl(std::string_view text) {
  Dataset out;
  int line_no = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what(),
                       line_no);
    }
    auto require = [&](const char* field) -> const nlohmann::json& {
      if (!rec.is_object() || !rec.contains(field)) {
        throw ParseError("line " + std::to_string(line_no) + ": missing field '" +
                             field + "'",
                         line_no);
      }
      return rec.at(field);
    };
    Example ex;
    try {
      const auto& id = require("id");
      ex.id = id.is_string() ? id.get<std::string>() : id.dump();
      ex.input_sentences = require("input_sentences").get<std::vector<std::string>>();
      ex.target = require("target").get<std::string>();
      if (rec.contains("highlights") && !rec.at("highlights").is_null()) {
        ex.highlights = rec.at("highlights").get<std::vector<int>>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::string FormatJsonl(const Dataset& dataset) {
  std::string out;
  for (const auto& ex : dataset) {
    nlohmann::json rec;
    rec["id"] = ex.id;
    rec["input_sentences"] = ex.input_sentences;
    rec["target"] = ex.target;
    if (ex.highlights) rec["highlights"] = *ex.highlights;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

Dataset LoadJsonl(const std::string& path) { return ParseJsonl(ReadFile(path)); }

void SaveJsonl(const Dataset& dataset, const std::string& path) {
  WriteFileAtomic(path, FormatJsonl(dataset));
}

// ---------------------------------------------------------------------------
// Synthetic task

Dataset SynthGenerate(const SynthOptions& o) {
  if (o.n_values < 2) throw ContractError("synth_generate: n_values must be >= 2");
  if (o.n_facts_per_input < 2) {
    throw ContractError("synth_generate: n_facts_per_input must be >= 2");
  }
  if (o.n_examples < 0) throw ContractError("synth_generate: negative n_examples");
  if (o.n_slots > static_cast<int>(kSlots.size()) ||
      o.n_values > static_cast<int>(kSlots[0].values.size()) ||
      o.n_facts_per_input > static_cast<int>(kEntities.size())) {
    throw ContractError("synth_generate: vocabulary overflow (at most " +
                        std::to_string(kSlots.size()) + " slots, " +
                        std::to_string(kSlots[0].values.size()) + " values, " +
                        std::to_string(kEntities.size()) + " entities)");
  }
  if (o.n_slots < o.n_facts_per_input) {
    throw ContractError("synth_generate: need at least as many slots as facts");
  }
  if (o.facts_per_target < 1 || o.facts_per_target > o.n_facts_per_input) {
    throw ContractError("synth_generate: facts_per_target out of range");
  }
  Rng rng(o.seed);
  Dataset out;
  out.reserve(o.n_examples);
  const int n_facts = o.n_facts_per_input;
  for (int e = 0; e < o.n_examples; ++e) {
    const auto entities = SampleDistinct(rng, static_cast<int>(kEntities.size()), n_facts);
    const auto slots = SampleDistinct(rng, o.n_slots, n_facts);
    std::vector<int> values(n_facts);
    for (int f = 0; f < n_facts; ++f) values[f] = rng.UniformInt(o.n_values);
    // The distractor never occupies sentence 0.
    const int distractor_pos = 1 + rng.UniformInt(n_facts);
    const int distractor = rng.UniformInt(static_cast<int>(kDistractors.size()));
    auto chosen = SampleDistinct(rng, n_facts, o.facts_per_target);

    Example ex;
    std::ostringstream id;
    id << o.id_prefix << "-" << std::setw(6) << std::setfill('0') << e;
    ex.id = id.str();
    std::vector<int> sentence_of_fact(n_facts);
    for (int f = 0, s = 0; f < n_facts; ++s) {
      if (s == distractor_pos) {
        ex.input_sentences.emplace_back(kDistractors[distractor]);
        continue;
      }
      const Slot& slot = kSlots[slots[f]];
      ex.input_sentences.push_back(
          FactSentence(kEntities[entities[f]], slot.attribute, slot.values[values[f]]));
      sentence_of_fact[f] = s;
      ++f;
    }
    if (distractor_pos == n_facts) {
      ex.input_sentences.emplace_back(kDistractors[distractor]);
    }
    std::vector<int> highlights;
    for (int f : chosen) highlights.push_back(sentence_of_fact[f]);
    std::sort(highlights.begin(), highlights.end());
    std::string target;
    for (int h : highlights) {
      if (!target.empty()) target += ' ';
      target += *RenderFact(ex.input_sentences[h]);
    }
    ex.target = target;
    ex.highlights = highlights;
    out.push_back(std::move(ex));
  }
  return out;
}

std::optional<std::string> RenderFact(std::string_view sentence) {
  const auto t = Tokenize(sentence);
  if (t.size() != 7 || t[0] != "the" || t[2] != "of" || t[4] != "is" || t[6] != ".") {
    return std::nullopt;
  }
  return t[3] + " has " + t[1] + " " + t[5] + " .";
}

}  // namespace focusvec
