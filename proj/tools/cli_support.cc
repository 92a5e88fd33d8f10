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

#include "cli_support.h"

#include <cstdio>
#include <ctime>
#include <filesystem>

#include "focusvec/checkpoint.h"
#include "focusvec/errors.h"
#include "focusvec/random.h"
#include "focusvec/version.h"

namespace focusvec::cli {
namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string Hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

KeyValues KeyValues::Parse(std::string_view text) {
  KeyValues kv;
  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    const std::string_view raw =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string line = Trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value",
                       line_no);
    }
    const std::string key = Trim(std::string_view(line).substr(0, eq));
    if (key.empty()) {
      throw ParseError("config line " + std::to_string(line_no) + ": empty key", line_no);
    }
    if (kv.values_.count(key)) {
      throw ParseError("config line " + std::to_string(line_no) + ": duplicate key '" +
                           key + "'",
                       line_no);
    }
    kv.values_[key] = {Trim(std::string_view(line).substr(eq + 1)), line_no};
  }
  return kv;
}

KeyValues KeyValues::Load(const std::string& path) { return Parse(ReadFile(path)); }

std::optional<std::string> KeyValues::Get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second.first;
}

std::optional<int64_t> KeyValues::GetInt(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  try {
    size_t used = 0;
    const int64_t v = std::stoll(it->second.first, &used);
    if (used == it->second.first.size()) return v;
  } catch (const std::exception&) {
  }
  throw ParseError("config line " + std::to_string(it->second.second) + ": '" + key +
                       "' must be an integer",
                   it->second.second);
}

std::optional<double> KeyValues::GetDouble(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  try {
    size_t used = 0;
    const double v = std::stod(it->second.first, &used);
    if (used == it->second.first.size()) return v;
  } catch (const std::exception&) {
  }
  throw ParseError("config line " + std::to_string(it->second.second) + ": '" + key +
                       "' must be a number",
                   it->second.second);
}

std::optional<bool> KeyValues::GetBool(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  const std::string& v = it->second.first;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ParseError("config line " + std::to_string(it->second.second) + ": '" + key +
                       "' must be true or false",
                   it->second.second);
}

void KeyValues::CheckKeys(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (!known.count(key)) {
      throw ParseError("config line " + std::to_string(value.second) + ": unknown key '" +
                           key + "'",
                       value.second);
    }
  }
}

std::string ResolveData(const std::string& path, const std::string& split) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) return (fs::path(path) / (split + ".jsonl")).string();
  return path;
}

std::string HashBytes(std::string_view bytes) { return Hex64(Fnv1a64(bytes)); }

std::string HashJson(const nlohmann::json& j) { return HashBytes(j.dump()); }

Manifest::Manifest(std::string command, nlohmann::json config, uint64_t seed)
    : command_(std::move(command)),
      config_(std::move(config)),
      seed_(seed),
      start_(std::chrono::steady_clock::now()),
      start_wall_(std::chrono::system_clock::now()) {}

void Manifest::AddInput(const std::string& path) {
  inputs_.push_back({{"path", path}, {"fnv1a64", HashBytes(ReadFile(path))}});
}

void Manifest::AddOutput(const std::string& path) {
  outputs_.push_back({{"path", path}, {"fnv1a64", HashBytes(ReadFile(path))}});
}

void Manifest::Write(const std::string& output_path) const {
  const std::time_t t = std::chrono::system_clock::to_time_t(start_wall_);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  const nlohmann::json j = {{"command", command_},
                            {"config", config_},
                            {"config_hash", HashJson(config_)},
                            {"seed", seed_},
                            {"version", Version()},
                            {"inputs", inputs_},
                            {"outputs", outputs_},
                            {"metrics", metrics_},
                            {"started_at", stamp},
                            {"wall_time_s", wall}};
  std::string path = output_path;
  while (!path.empty() && path.back() == '/') path.pop_back();
  WriteFileAtomic(path + ".manifest.json", j.dump(2) + "\n");
}

}  // namespace focusvec::cli
