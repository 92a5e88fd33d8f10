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

#include "focusvec/focus_vectors.h"

#include "focusvec/errors.h"

namespace focusvec {

FocusVectors FocusVectors::Identity(int encoder_layers, int d_model) {
  if (encoder_layers < 1 || d_model < 1) {
    throw ContractError("focus vectors need at least one layer and d >= 1");
  }
  FocusVectors fv;
  for (int l = 0; l <= encoder_layers; ++l) {
    fv.layers.push_back({Tensor(Shape{d_model}, 1.0), Tensor(Shape{d_model}, 0.0),
                         Tensor(Shape{d_model}, 1.0), Tensor(Shape{d_model}, 0.0)});
  }
  return fv;
}

int FocusVectors::d_model() const {
  return layers.empty() ? 0 : static_cast<int>(layers[0].scale_focus.size());
}

int64_t FocusVectors::ParameterCount() const {
  int64_t n = 0;
  for (const auto& [name, t] : NamedParameters()) n += t->size();
  return n;
}

bool FocusVectors::IsIdentityLayer(int layer) const {
  const FocusLayer& fl = layers.at(layer);
  for (const Tensor* t : {&fl.scale_focus, &fl.scale_nonfocus}) {
    for (double v : t->data()) {
      if (v != 1.0) return false;
    }
  }
  for (const Tensor* t : {&fl.bias_focus, &fl.bias_nonfocus}) {
    for (double v : t->data()) {
      if (v != 0.0) return false;
    }
  }
  return true;
}

void FocusVectors::SetRequiresGrad(bool value) {
  for (auto& [name, t] : NamedParameters()) t->set_requires_grad(value);
}

std::vector<std::pair<std::string, Tensor*>> FocusVectors::NamedParameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "focus." + std::to_string(l) + ".";
    out.emplace_back(prefix + "scale_focus", &layers[l].scale_focus);
    out.emplace_back(prefix + "bias_focus", &layers[l].bias_focus);
    out.emplace_back(prefix + "scale_nonfocus", &layers[l].scale_nonfocus);
    out.emplace_back(prefix + "bias_nonfocus", &layers[l].bias_nonfocus);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> FocusVectors::NamedParameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<FocusVectors*>(this)->NamedParameters()) {
    out.emplace_back(name, t);
  }
  return out;
}

}  // namespace focusvec
