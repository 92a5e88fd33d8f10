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

// Tokenization, sentence spans, JSONL datasets and the synthetic fact-copy
// task.
//
// A synthetic input is a handful of fact sentences plus one distractor:
//
//   the pet of bob is parrot . the city of nina is oslo . it rained all day .
//
// and the target renders exactly one of the facts, e.g. "nina has city oslo .".
// The index of that fact sentence is the gold highlight.

#ifndef FOCUSVEC_CORPUS_H_
#define FOCUSVEC_CORPUS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace focusvec {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumReservedIds = 4;
inline constexpr std::string_view kSentenceDelimiter = ".";

// Whitespace tokenization.
std::vector<std::string> Tokenize(std::string_view text);
std::string JoinTokens(std::span<const std::string> tokens);

class Vocab {
 public:
  Vocab();
  // Word-level vocabulary sorted by descending frequency (ties broken
  // lexicographically) after the reserved tokens.
  static Vocab Build(std::span<const std::string> texts);
  // Rebuilds a vocabulary from its id-ordered token list (reserved first).
  static Vocab FromTokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int Id(std::string_view token) const;
  const std::string& Token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> Encode(std::string_view text) const;
  // Joins tokens with single spaces, dropping pad/bos/eos.
  std::string Decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Half-open token range [begin, end) of one sentence.
struct SentenceSpan {
  int index = 0;
  int begin = 0;
  int end = 0;

  int length() const { return end - begin; }
  bool operator==(const SentenceSpan&) const = default;
};

// Splits after every "." token; a trailing fragment becomes a final sentence.
// Throws ContractError on empty input.
std::vector<SentenceSpan> SentenceSplit(std::span<const std::string> tokens);
std::vector<SentenceSpan> SentenceSplitIds(std::span<const int> ids, int period_id);

// Checks that spans are ordered, disjoint and cover [0, n_tokens).
void ValidateSpans(std::span<const SentenceSpan> spans, int n_tokens);

// One-bit-per-token mask marking every token of the listed sentences.
std::vector<uint8_t> HighlightMask(std::span<const SentenceSpan> spans,
                                   std::span<const int> sentence_indices);
// Inverse of HighlightMask. Throws ContractError if a sentence is only
// partially marked.
std::vector<int> MaskToSentences(std::span<const SentenceSpan> spans,
                                 std::span<const uint8_t> mask);

struct Example {
  std::string id;
  std::vector<std::string> input_sentences;
  std::string target;
  std::optional<std::vector<int>> highlights;

  bool operator==(const Example&) const = default;
};

using Dataset = std::vector<Example>;

// Token ids of an example. `target` ends with eos.
struct EncodedExample {
  std::string id;
  std::vector<int> source;
  std::vector<SentenceSpan> spans;
  std::vector<int> target;
  std::vector<int> highlights;
};

EncodedExample EncodeExample(const Example& example, const Vocab& vocab);
std::vector<EncodedExample> EncodeDataset(const Dataset& dataset, const Vocab& vocab);
// Every whitespace token of the inputs and targets.
std::vector<std::string> CorpusTexts(const Dataset& dataset);

// JSONL schema: {id, input_sentences: [string], target: string,
// highlights?: [int]}. Unknown fields are ignored on load.
Dataset ParseJsonl(std::string_view text);
std::string FormatJsonl(const Dataset& dataset);
Dataset LoadJsonl(const std::string& path);
void SaveJsonl(const Dataset& dataset, const std::string& path);

struct SynthOptions {
  int n_examples = 5000;
  int n_facts_per_input = 4;
  int n_slots = 8;
  int n_values = 8;
  uint64_t seed = 1;
  // Number of facts rendered into the target (1, or 2 for the multi-fact
  // variant; renderings are concatenated in sentence order).
  int facts_per_target = 1;
  std::string id_prefix = "ex";
};

Dataset SynthGenerate(const SynthOptions& options);

// "the A of E is V ." -> "E has A V ."; nullopt if `sentence` is not a fact.
std::optional<std::string> RenderFact(std::string_view sentence);

}  // namespace focusvec

#endif  // FOCUSVEC_CORPUS_H_
