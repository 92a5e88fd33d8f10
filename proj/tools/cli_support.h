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

// Helpers shared by the focusvec command line subcommands.

#ifndef FOCUSVEC_TOOLS_CLI_SUPPORT_H_
#define FOCUSVEC_TOOLS_CLI_SUPPORT_H_

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace focusvec::cli {

// A `key = value` file. Blank lines and lines starting with '#' are ignored.
class KeyValues {
 public:
  KeyValues() = default;
  static KeyValues Parse(std::string_view text);
  static KeyValues Load(const std::string& path);

  bool Has(const std::string& key) const { return values_.count(key) > 0; }
  std::optional<std::string> Get(const std::string& key) const;
  // Throws ParseError naming the key and line when the value does not parse.
  std::optional<int64_t> GetInt(const std::string& key) const;
  std::optional<double> GetDouble(const std::string& key) const;
  std::optional<bool> GetBool(const std::string& key) const;
  // Throws ParseError for the first key outside `known`.
  void CheckKeys(const std::set<std::string>& known) const;

 private:
  std::map<std::string, std::pair<std::string, int>> values_;
};

// Resolves a dataset argument: a file is used as is, a directory maps to
// <dir>/<split>.jsonl.
std::string ResolveData(const std::string& path, const std::string& split);

// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string HashJson(const nlohmann::json& j);
std::string HashBytes(std::string_view bytes);

// Run manifest written next to an output as <output>.manifest.json.
class Manifest {
 public:
  Manifest(std::string command, nlohmann::json config, uint64_t seed);

  void AddInput(const std::string& path);
  void AddOutput(const std::string& path);
  void SetMetrics(nlohmann::json metrics) { metrics_ = std::move(metrics); }
  // Writes atomically; the time fields are the only run-dependent ones.
  void Write(const std::string& output_path) const;

 private:
  std::string command_;
  nlohmann::json config_;
  uint64_t seed_;
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json outputs_ = nlohmann::json::array();
  nlohmann::json metrics_ = nlohmann::json::object();
  std::chrono::steady_clock::time_point start_;
  std::chrono::system_clock::time_point start_wall_;
};

}  // namespace focusvec::cli

#endif  // FOCUSVEC_TOOLS_CLI_SUPPORT_H_
