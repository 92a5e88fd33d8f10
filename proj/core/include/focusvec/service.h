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

// HTTP JSON API over a loaded model.
//
//   GET  /model/info   configuration, loaded controls and decode presets
//   POST /generate     {text, highlights, mode, beam?}
//   POST /attribute    {text, target, methods?, mode?, highlights?}
//
// Handlers are pure functions of the loaded artifacts and the request body.

#ifndef FOCUSVEC_SERVICE_H_
#define FOCUSVEC_SERVICE_H_

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "focusvec/control.h"
#include "focusvec/corpus.h"
#include "focusvec/focus_vectors.h"
#include "focusvec/model.h"

namespace focusvec {

struct ServiceArtifacts {
  Model model;
  Vocab vocab;
  std::optional<FocusVectors> focus;
  std::optional<OffsetConfig> offset;
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  // 0 picks a free port.
  int port = 8080;
  // Upper bound on concurrently served requests.
  int workers = 4;
  // Served at / when nonempty.
  std::string static_dir;
  DecodeOptions decode = {};
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

class Service {
 public:
  Service(ServiceArtifacts artifacts, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ServiceResponse ModelInfo() const;
  ServiceResponse Generate(std::string_view request_body) const;
  ServiceResponse Attribute(std::string_view request_body) const;

  // Binds the listening socket and returns the port. Throws ContractError if
  // the address is unavailable.
  int Bind();
  // Serves until Stop(); binds first if needed.
  void Run();
  // Serves on a background thread.
  void Start();
  void Stop();
  int port() const { return port_; }

 private:
  struct Server;

  ServiceArtifacts artifacts_;
  ServiceOptions options_;
  int port_ = -1;
  std::unique_ptr<Server> server_;
};

}  // namespace focusvec

#endif  // FOCUSVEC_SERVICE_H_
