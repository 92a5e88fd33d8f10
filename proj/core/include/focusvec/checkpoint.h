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

// Checkpoint container shared by model weights and focus vectors.
//
// Layout (all integers little-endian):
//   bytes [0, 8)    magic "FVCKPT01"
//   bytes [8, 16)   uint64 header length H
//   bytes [16, 16+H) UTF-8 JSON header
//   remaining       raw float64 tensor payloads
//
// The header carries {"format_version", "type", "dtype", "meta", "tensors"};
// every tensor entry records its name, shape, byte offset (relative to the
// payload start) and byte count.

#ifndef FOCUSVEC_CHECKPOINT_H_
#define FOCUSVEC_CHECKPOINT_H_

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "focusvec/tensor.h"

namespace focusvec {

inline constexpr int kCheckpointFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Container {
  std::string type;  // "model" or "focus_vectors"
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;

  const Tensor& Get(const std::string& name) const;
};

// Writes atomically (temporary file + rename).
void WriteContainer(const std::string& path, const Container& container);
Container ReadContainer(const std::string& path);

// Writes `contents` to `path` through a temporary file and rename.
void WriteFileAtomic(const std::string& path, const std::string& contents);
std::string ReadFile(const std::string& path);

}  // namespace focusvec

#endif  // FOCUSVEC_CHECKPOINT_H_
