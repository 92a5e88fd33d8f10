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

// Small fixtures shared by the unit tests.

#ifndef FOCUSVEC_TESTS_TEST_UTIL_H_
#define FOCUSVEC_TESTS_TEST_UTIL_H_

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "focusvec/corpus.h"
#include "focusvec/model.h"
#include "focusvec/random.h"

namespace focusvec::testing {

inline ModelConfig TinyConfig(int vocab_size = 24) {
  ModelConfig c;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.d_model = 16;
  c.heads = 2;
  c.d_ff = 32;
  c.vocab_size = vocab_size;
  c.max_positions = 64;
  return c;
}

// Random source of 2-4 sentences over non-reserved ids, each ending in
// `period`, and a random target ending in eos.
inline EncodedExample RandomExample(Rng& rng, int vocab_size, int period = 4) {
  EncodedExample ex;
  ex.id = "r";
  const int sentences = 2 + rng.UniformInt(3);
  for (int s = 0; s < sentences; ++s) {
    SentenceSpan span;
    span.index = s;
    span.begin = static_cast<int>(ex.source.size());
    const int len = 1 + rng.UniformInt(4);
    for (int i = 0; i < len; ++i) ex.source.push_back(5 + rng.UniformInt(vocab_size - 5));
    ex.source.push_back(period);
    span.end = static_cast<int>(ex.source.size());
    ex.spans.push_back(span);
  }
  const int tlen = 1 + rng.UniformInt(5);
  for (int i = 0; i < tlen; ++i) ex.target.push_back(5 + rng.UniformInt(vocab_size - 5));
  ex.target.push_back(kEosId);
  ex.highlights = {rng.UniformInt(sentences)};
  return ex;
}

inline std::vector<EncodedExample> RandomExamples(int n, uint64_t seed, int vocab_size) {
  Rng rng(seed);
  std::vector<EncodedExample> out;
  for (int i = 0; i < n; ++i) out.push_back(RandomExample(rng, vocab_size));
  return out;
}

// Token mask with ones over the listed sentences.
inline std::vector<uint8_t> SentenceMask(const EncodedExample& ex, const std::vector<int>& sents) {
  std::vector<uint8_t> mask(ex.source.size(), 0);
  for (int s : sents) {
    for (int i = ex.spans[s].begin; i < ex.spans[s].end; ++i) mask[i] = 1;
  }
  return mask;
}

// Creates a fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("focusvec_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string File(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace focusvec::testing

#endif  // FOCUSVEC_TESTS_TEST_UTIL_H_
