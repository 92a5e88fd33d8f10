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

#include "focusvec/service.h"

#include <chrono>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>

#include "focusvec/attribution.h"
#include "focusvec/errors.h"
#include "focusvec/version.h"

namespace focusvec {
namespace {

struct HttpError {
  int status;
  std::string message;
  nlohmann::json extra = nlohmann::json::object();
};

ServiceResponse ErrorResponse(int status, const std::string& message,
                              const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json body = {{"error", message}, {"status", status}};
  for (auto it = extra.begin(); it != extra.end(); ++it) body[it.key()] = it.value();
  return {status, std::move(body)};
}

nlohmann::json ParseBody(std::string_view text) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw HttpError{400, std::string("malformed JSON: ") + e.what()};
  }
  if (!req.is_object()) throw HttpError{400, "request body must be a JSON object"};
  return req;
}

std::string RequireString(const nlohmann::json& req, const char* field) {
  if (!req.contains(field) || !req[field].is_string()) {
    throw HttpError{400, std::string("field '") + field + "' must be a string"};
  }
  return req[field].get<std::string>();
}

struct SplitText {
  std::vector<std::string> tokens;
  std::vector<SentenceSpan> spans;
  std::vector<std::string> sentences;
};

SplitText SplitRequestText(const std::string& text) {
  SplitText s;
  s.tokens = Tokenize(text);
  if (s.tokens.empty()) throw HttpError{422, "text is empty"};
  s.spans = SentenceSplit(s.tokens);
  for (const auto& span : s.spans) {
    s.sentences.push_back(JoinTokens(std::span<const std::string>(
        s.tokens.begin() + span.begin, s.tokens.begin() + span.end)));
  }
  return s;
}

std::vector<int> ParseHighlights(const nlohmann::json& req, int n_sentences) {
  std::vector<int> out;
  if (!req.contains("highlights") || req["highlights"].is_null()) return out;
  const auto& h = req["highlights"];
  if (!h.is_array()) throw HttpError{400, "field 'highlights' must be an array of integers"};
  for (const auto& v : h) {
    if (!v.is_number_integer()) {
      throw HttpError{400, "highlight " + v.dump() + " is not an integer",
                      {{"index", v}}};
    }
    const int64_t i = v.get<int64_t>();
    if (i < 0 || i >= n_sentences) {
      throw HttpError{400,
                      "highlight index " + std::to_string(i) + " is out of range for " +
                          std::to_string(n_sentences) + " sentences",
                      {{"index", i}}};
    }
    out.push_back(static_cast<int>(i));
  }
  return out;
}

double ElapsedMs(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

template <typename Fn>
ServiceResponse Guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const HttpError& e) {
    return ErrorResponse(e.status, e.message, e.extra);
  } catch (const NumericFailure& e) {
    return ErrorResponse(500, e.what(), {{"kind", "numeric"}});
  } catch (const Error& e) {
    return ErrorResponse(400, e.what(), {{"kind", ErrorKindName(e.kind())}});
  }
}

}  // namespace

struct Service::Server {
  httplib::Server http;
  std::thread thread;
};

Service::Service(ServiceArtifacts artifacts, ServiceOptions options)
    : artifacts_(std::move(artifacts)), options_(std::move(options)) {
  if (options_.workers < 1) throw ContractError("service: workers must be >= 1");
  if (artifacts_.focus) {
    artifacts_.model.CheckDirective(
        ControlDirective::Focus(std::vector<uint8_t>(1, 1), *artifacts_.focus), 1);
  }
}

Service::~Service() { Stop(); }

ServiceResponse Service::ModelInfo() const {
  const Model& model = artifacts_.model;
  nlohmann::json controls = {"vanilla", "padding"};
  if (artifacts_.focus) controls.push_back("focus");
  if (artifacts_.offset) controls.push_back("offset");
  nlohmann::json body = {
      {"version", Version()},
      {"config", model.config().ToJson()},
      {"vocab_size", artifacts_.vocab.size()},
      {"parameter_count", model.ParameterCount()},
      {"controls", controls},
      {"presets",
       {{"dialogue-style", {{"beam", DecodePreset("dialogue-style").beam_width}}},
        {"summarization-style", {{"beam", DecodePreset("summarization-style").beam_width}}}}},
      {"decode",
       {{"beam", options_.decode.beam_width},
        {"max_len", options_.decode.max_len},
        {"length_norm", options_.decode.length_norm}}},
      {"attribution_methods", {"loo", "attn", "gradnorm", "gradinput"}}};
  if (artifacts_.focus) {
    body["focus"] = {{"num_layers", artifacts_.focus->num_layers()},
                     {"d_model", artifacts_.focus->d_model()},
                     {"parameter_count", artifacts_.focus->ParameterCount()}};
  }
  if (artifacts_.offset) body["offset"] = {{"value", artifacts_.offset->offset}};
  return {200, std::move(body)};
}

ServiceResponse Service::Generate(std::string_view request_body) const {
  return Guarded([&]() -> ServiceResponse {
    const auto t0 = std::chrono::steady_clock::now();
    const nlohmann::json req = ParseBody(request_body);
    const SplitText split = SplitRequestText(RequireString(req, "text"));
    std::string mode_name = "vanilla";
    if (req.contains("mode")) {
      if (!req["mode"].is_string()) throw HttpError{400, "field 'mode' must be a string"};
      mode_name = req["mode"].get<std::string>();
    }
    ControlMode mode;
    try {
      mode = ParseControlMode(mode_name);
    } catch (const ContractError& e) {
      throw HttpError{400, e.what(),
                      {{"valid", {"vanilla", "focus", "offset", "padding"}}}};
    }
    if (mode == ControlMode::kFocus && !artifacts_.focus) {
      throw HttpError{400, "mode 'focus' is unavailable: no focus vectors loaded"};
    }
    if (mode == ControlMode::kOffset && !artifacts_.offset) {
      throw HttpError{400, "mode 'offset' is unavailable: no offset config loaded"};
    }
    const auto highlights = ParseHighlights(req, static_cast<int>(split.spans.size()));
    SteerParams params;
    params.decode = options_.decode;
    if (req.contains("beam") && !req["beam"].is_null()) {
      if (!req["beam"].is_number_integer() || req["beam"].get<int64_t>() < 1 ||
          req["beam"].get<int64_t>() > 64) {
        throw HttpError{400, "field 'beam' must be an integer in [1, 64]"};
      }
      params.decode.beam_width = req["beam"].get<int>();
    }
    if (artifacts_.focus) params.focus = &*artifacts_.focus;
    if (artifacts_.offset) params.offset = artifacts_.offset->offset;
    std::vector<int> ids;
    for (const auto& t : split.tokens) ids.push_back(artifacts_.vocab.Id(t));
    if (static_cast<int>(ids.size()) > artifacts_.model.config().max_positions) {
      throw HttpError{422, "text has " + std::to_string(ids.size()) +
                               " tokens; the model accepts at most " +
                               std::to_string(artifacts_.model.config().max_positions)};
    }
    const auto mask = HighlightMask(split.spans, highlights);
    const auto out = Steer(artifacts_.model, ids, split.spans, mask, mode, params);
    std::vector<std::string> tokens;
    for (int id : out) tokens.push_back(artifacts_.vocab.Token(id));
    nlohmann::json body = {{"sentences", split.sentences},
                           {"highlights", highlights},
                           {"mode", ControlModeName(mode)},
                           {"beam", params.decode.beam_width},
                           {"output", artifacts_.vocab.Decode(out)},
                           {"tokens", tokens},
                           {"elapsed_ms", ElapsedMs(t0)}};
    return {200, std::move(body)};
  });
}

ServiceResponse Service::Attribute(std::string_view request_body) const {
  return Guarded([&]() -> ServiceResponse {
    const auto t0 = std::chrono::steady_clock::now();
    const nlohmann::json req = ParseBody(request_body);
    const SplitText split = SplitRequestText(RequireString(req, "text"));
    const std::string target = RequireString(req, "target");
    std::vector<AttributionMethod> methods;
    if (req.contains("methods") && !req["methods"].is_null()) {
      if (!req["methods"].is_array()) {
        throw HttpError{400, "field 'methods' must be an array of strings"};
      }
      for (const auto& m : req["methods"]) {
        const std::string name = m.is_string() ? m.get<std::string>() : m.dump();
        try {
          methods.push_back(ParseAttributionMethod(name));
        } catch (const ContractError&) {
          throw HttpError{400, "unknown attribution method '" + name + "'",
                          {{"valid", {"loo", "attn", "gradnorm", "gradinput"}}}};
        }
      }
    } else {
      methods.assign(std::begin(kAllAttributionMethods), std::end(kAllAttributionMethods));
    }
    std::string mode_name = req.value("mode", std::string("vanilla"));
    ControlMode mode;
    try {
      mode = ParseControlMode(mode_name);
    } catch (const ContractError& e) {
      throw HttpError{400, e.what()};
    }
    if ((mode == ControlMode::kFocus && !artifacts_.focus) ||
        (mode == ControlMode::kOffset && !artifacts_.offset)) {
      throw HttpError{400, "mode '" + mode_name + "' is unavailable"};
    }
    const auto highlights = ParseHighlights(req, static_cast<int>(split.spans.size()));
    std::vector<int> ids;
    for (const auto& t : split.tokens) ids.push_back(artifacts_.vocab.Id(t));
    auto target_ids = artifacts_.vocab.Encode(target);
    target_ids.push_back(artifacts_.model.config().eos_id);
    const int max_positions = artifacts_.model.config().max_positions;
    if (static_cast<int>(ids.size()) > max_positions ||
        static_cast<int>(target_ids.size()) > max_positions) {
      throw HttpError{422, "text or target exceeds the model's maximum length"};
    }
    ControlDirective directive;
    auto mask = HighlightMask(split.spans, highlights);
    switch (mode) {
      case ControlMode::kVanilla:
        break;
      case ControlMode::kFocus:
        directive = ControlDirective::Focus(std::move(mask), *artifacts_.focus);
        break;
      case ControlMode::kOffset:
        directive = ControlDirective::Offset(std::move(mask), artifacts_.offset->offset);
        break;
      case ControlMode::kPadding:
        directive = ControlDirective::Padding(std::move(mask));
        break;
    }
    const AttributionReport report = RankSentences(artifacts_.model, ids, split.spans,
                                                   target_ids, methods, directive);
    nlohmann::json body = {{"sentences", split.sentences},
                           {"target", target},
                           {"mode", ControlModeName(mode)},
                           {"methods", report.ToJson()},
                           {"elapsed_ms", ElapsedMs(t0)}};
    return {200, std::move(body)};
  });
}

int Service::Bind() {
  if (server_) return port_;
  auto server = std::make_unique<Server>();
  httplib::Server& http = server->http;
  const int workers = options_.workers;
  http.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  // SO_REUSEADDR only: a second server on a taken port must fail to bind.
  http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                            {"Access-Control-Allow-Headers", "Content-Type"},
                            {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  http.Get("/model/info", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, ModelInfo());
  });
  http.Post("/generate", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, Generate(req.body));
  });
  http.Post("/attribute", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, Attribute(req.body));
  });
  http.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    const std::string message = res.status == 404
                                    ? "no route for " + req.method + " " + req.path
                                    : "request failed";
    res.set_content(nlohmann::json{{"error", message}, {"status", res.status}}.dump(),
                    "application/json");
    return httplib::Server::HandlerResponse::Handled;
  });
  if (!options_.static_dir.empty() && !http.set_mount_point("/", options_.static_dir)) {
    throw ContractError("static directory '" + options_.static_dir + "' does not exist");
  }
  const int port = options_.port == 0 ? http.bind_to_any_port(options_.host)
                                      : (http.bind_to_port(options_.host, options_.port)
                                             ? options_.port
                                             : -1);
  if (port < 0) {
    throw ContractError("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
  port_ = port;
  server_ = std::move(server);
  return port_;
}

void Service::Run() {
  Bind();
  server_->http.listen_after_bind();
}

void Service::Start() {
  Bind();
  server_->thread = std::thread([this] { server_->http.listen_after_bind(); });
  server_->http.wait_until_ready();
}

void Service::Stop() {
  if (!server_) return;
  server_->http.stop();
  if (server_->thread.joinable()) server_->thread.join();
  server_.reset();
  port_ = -1;
}

}  // namespace focusvec
