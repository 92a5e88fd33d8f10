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

// Per-layer scale/bias quadruples applied to encoder outputs.
//
// For encoder layer output h (including the input embeddings, layer 0) and a
// highlight mask c:
//   f(h_i) = h_i * scale_focus + bias_focus         if c_i = 1
//   f(h_i) = h_i * scale_nonfocus + bias_nonfocus   if c_i = 0

#ifndef FOCUSVEC_FOCUS_VECTORS_H_
#define FOCUSVEC_FOCUS_VECTORS_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "focusvec/tensor.h"

namespace focusvec {

struct FocusLayer {
  Tensor scale_focus;
  Tensor bias_focus;
  Tensor scale_nonfocus;
  Tensor bias_nonfocus;
};

struct FocusVectors {
  // encoder_layers + 1 entries; entry 0 acts on the input embeddings.
  std::vector<FocusLayer> layers;

  // Scale vectors of ones and bias vectors of zeros.
  static FocusVectors Identity(int encoder_layers, int d_model);

  int num_layers() const { return static_cast<int>(layers.size()); }
  int d_model() const;
  // 4 * (encoder_layers + 1) * d.
  int64_t ParameterCount() const;
  bool IsIdentityLayer(int layer) const;
  void SetRequiresGrad(bool value);

  std::vector<std::pair<std::string, Tensor*>> NamedParameters();
  std::vector<std::pair<std::string, const Tensor*>> NamedParameters() const;
};

}  // namespace focusvec

#endif  // FOCUSVEC_FOCUS_VECTORS_H_
