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

#ifndef FOCUSVEC_VERSION_H_
#define FOCUSVEC_VERSION_H_

#include <string_view>

namespace focusvec {

// Package version with a git-describe suffix when built from a checkout.
std::string_view Version();

}  // namespace focusvec

#endif  // FOCUSVEC_VERSION_H_
