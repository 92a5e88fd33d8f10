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

#include "focusvec/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "focusvec/errors.h"

namespace focusvec {
namespace {

constexpr char kMagic[8] = {'F', 'V', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

void AppendU64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t ReadU64(const std::string& in, size_t at) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

void AppendDouble(std::string& out, double d) { AppendU64(out, std::bit_cast<uint64_t>(d)); }

}  // namespace

const Tensor& Container::Get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw ParseError("checkpoint has no tensor named '" + name + "'");
}

void WriteFileAtomic(const std::string& path, const std::string& contents) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) {
    std::filesystem::create_directories(target.parent_path());
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ContractError("cannot open '" + tmp + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw ContractError("failed writing '" + tmp + "'");
  }
  std::filesystem::rename(tmp, target);
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void WriteContainer(const std::string& path, const Container& container) {
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["type"] = container.type;
  header["dtype"] = "float64";
  header["meta"] = container.meta.is_null() ? nlohmann::json::object() : container.meta;
  nlohmann::json entries = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& nt : container.tensors) {
    const uint64_t nbytes = static_cast<uint64_t>(nt.tensor.size()) * 8;
    entries.push_back({{"name", nt.name},
                       {"shape", nt.tensor.shape()},
                       {"offset", offset},
                       {"nbytes", nbytes}});
    offset += nbytes;
  }
  header["tensors"] = entries;
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  AppendU64(out, header_text.size());
  out += header_text;
  out.reserve(out.size() + offset);
  for (const auto& nt : container.tensors) {
    for (double d : nt.tensor.data()) AppendDouble(out, d);
  }
  WriteFileAtomic(path, out);
}

Container ReadContainer(const std::string& path) {
  const std::string bytes = ReadFile(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw ParseError("'" + path + "' is not a focusvec checkpoint");
  }
  const uint64_t header_len = ReadU64(bytes, 8);
  if (16 + header_len > bytes.size()) throw ParseError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid checkpoint header: ") + e.what());
  }
  if (header.value("format_version", 0) != kCheckpointFormatVersion) {
    throw ParseError("unsupported checkpoint format version");
  }
  if (header.value("dtype", "") != "float64") {
    throw ParseError("unsupported checkpoint dtype");
  }
  Container c;
  c.type = header.value("type", "");
  c.meta = header.value("meta", nlohmann::json::object());
  const size_t payload = 16 + header_len;
  try {
    for (const auto& entry : header.at("tensors")) {
      Shape shape = entry.at("shape").get<Shape>();
      const uint64_t off = entry.at("offset").get<uint64_t>();
      const uint64_t nbytes = entry.at("nbytes").get<uint64_t>();
      if (nbytes != static_cast<uint64_t>(NumElements(shape)) * 8 ||
          payload + off + nbytes > bytes.size()) {
        throw ParseError("tensor '" + entry.value("name", "") +
                         "' has an inconsistent extent");
      }
      std::vector<double> data(nbytes / 8);
      for (size_t i = 0; i < data.size(); ++i) {
        data[i] = std::bit_cast<double>(ReadU64(bytes, payload + off + 8 * i));
      }
      c.tensors.push_back({entry.at("name").get<std::string>(),
                           Tensor(std::move(shape), std::move(data))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid checkpoint tensor table: ") + e.what());
  }
  return c;
}

}  // namespace focusvec
