#pragma once

// JSON-over-HTTP facade: generate, validate, render and health endpoints.
// Handlers are plain member functions returning ApiResponse so they can be
// exercised without a socket; mount() wires them into an httplib::Server.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <httplib.h>

#include "q2d/graph.hpp"
#include "q2d/lint.hpp"
#include "q2d/llm.hpp"
#include "q2d/render.hpp"

namespace q2d::service {

inline constexpr std::string_view kVersion = "0.1.0";

struct ServiceConfig {
  llm::GenerationConfig generation = llm::GenerationConfig::for_diagrams();
  std::size_t max_code_chars = 200000;
  std::filesystem::path trace_file = "traces/service.jsonl";
  std::optional<std::filesystem::path> static_dir;
  std::chrono::seconds health_cache{30};
};

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

inline ApiResponse json_response(int status, const Json& body) {
  return {status, body.dump(-1, ' ', false, Json::error_handler_t::replace), "application/json"};
}

inline ApiResponse error_response(int status, std::string_view error, std::string_view message,
                                  std::string_view path = {}) {
  Json body{{"error", error}, {"message", message}};
  if (!path.empty()) body["path"] = path;
  return json_response(status, body);
}

inline ApiResponse parse_error_response(const ParseError& e) {
  return error_response(400, to_string(e.kind), e.message, e.path);
}

class Service {
 public:
  Service(ServiceConfig config, std::shared_ptr<llm::ChatTransport> transport)
      : config_(std::move(config)), transport_(std::move(transport)), traces_(config_.trace_file) {}

  /// POST /api/generate: {code, query, level?, mode?}. Model misbehaviour never
  /// produces a 5xx; an unrepaired result comes back as 422 with whatever the
  /// best attempt produced.
  ApiResponse generate(std::string_view body) {
    Json req = Json::parse(body.begin(), body.end(), nullptr, false);
    if (req.is_discarded() || !req.is_object()) return error_response(400, "BrokenJson", "request body is not a JSON object");
    auto text_field = [&](const char* key) -> std::optional<std::string> {
      auto it = req.find(key);
      if (it == req.end() || !it->is_string()) return std::nullopt;
      return it->get<std::string>();
    };
    auto code = text_field("code");
    auto query = text_field("query");
    if (!code || code->empty()) return error_response(400, "InvalidRequest", "\"code\" must be a non-empty string");
    if (!query || query->empty()) return error_response(400, "InvalidRequest", "\"query\" must be a non-empty string");
    if (code->size() > config_.max_code_chars)
      return error_response(400, "InvalidRequest",
                            "\"code\" exceeds " + std::to_string(config_.max_code_chars) + " characters");
    auto level = detail_level_from_string(text_field("level").value_or("medium"));
    if (!level) return error_response(400, "InvalidRequest", "\"level\" must be minimal, medium or full");
    auto mode = llm::mode_from_string(text_field("mode").value_or("finetuned"));
    if (!mode) return error_response(400, "InvalidRequest", "\"mode\" must be base or finetuned");

    auto result = llm::generate_diagram(config_.generation, *transport_, *code, *query, *mode, *level);
    auto trace_id = llm::new_trace_id();
    traces_.append(trace_id, result.trace);

    if (result.status == llm::Status::EndpointError) {
      Json out{{"error", "EndpointError"}, {"message", result.error}, {"trace_id", trace_id}};
      return json_response(502, out);
    }
    Json out = Json::object();
    const Graph* graph = result.graph(*level);
    if (graph) {
      out["graph"] = graph_to_json(*graph);
      bool drawable = !preflight(*graph).has_value();
      out["plantuml"] = drawable ? to_plantuml(*graph).text : "";
      out["mermaid"] = drawable ? to_mermaid(*graph).text : "";
      out["defects"] = to_json(lint(*graph, *code, std::string(to_string(*level))));
    } else {
      out["graph"] = nullptr;
      out["plantuml"] = "";
      out["mermaid"] = "";
      out["defects"] = to_json(lint_text(result.trace.attempts.empty() ? "" : result.trace.attempts.back().response,
                                         std::nullopt, std::string(to_string(*level))));
    }
    auto answer = result.text_answer();
    out["text_answer"] = answer ? Json(*answer) : Json(nullptr);
    out["trace_id"] = trace_id;
    out["attempts"] = result.trace.attempts.size();
    out["status"] = result.status == llm::Status::Ok ? "ok" : "unrepaired";
    return json_response(result.status == llm::Status::Ok ? 200 : 422, out);
  }

  /// POST /api/validate: a graph, or {"graph": ..., "code": ...} to enable the name check.
  ApiResponse validate(std::string_view body) const {
    Json j = Json::parse(body.begin(), body.end(), nullptr, false);
    if (j.is_discarded()) return error_response(400, "BrokenJson", "malformed JSON");
    std::optional<std::string> code;
    const Json* graph_json = &j;
    if (j.is_object() && j.contains("graph") && !j.contains("nodes")) {
      graph_json = &j["graph"];
      if (auto it = j.find("code"); it != j.end() && it->is_string()) code = it->get<std::string>();
    }
    auto g = graph_from_json(*graph_json);
    if (!g) return parse_error_response(g.error());
    std::optional<std::string_view> src;
    if (code) src = *code;
    return json_response(200, to_json(lint(*g, src)));
  }

  /// POST /api/render?format=plantuml|mermaid
  ApiResponse render(std::string_view body, std::string_view format_name) const {
    auto format = markup_format_from_string(format_name.empty() ? "plantuml" : format_name);
    if (!format) return error_response(400, "InvalidRequest", "format must be plantuml or mermaid");
    auto g = parse_graph(body);
    if (!g) return parse_error_response(g.error());
    if (auto nd = preflight(*g))
      return json_response(422, Json{{"error", "NonDrawable"}, {"reason", to_string(nd->reason)}, {"message", nd->detail}});
    auto out = q2d::render(*g, *format);
    return json_response(200, Json{{"format", to_string(out.format)}, {"text", out.text}, {"warnings", out.warnings}});
  }

  /// GET /api/health; endpoint reachability is probed at most once per cache window.
  ApiResponse health() {
    std::lock_guard lock(health_mutex_);
    auto now = std::chrono::steady_clock::now();
    if (!last_probe_ || now - *last_probe_ > config_.health_cache) {
      reachable_ = transport_->reachable();
      last_probe_ = now;
    }
    return json_response(200, Json{{"status", "ok"},
                                   {"version", kVersion},
                                   {"endpoint", config_.generation.endpoint},
                                   {"endpoint_reachable", reachable_}});
  }

  void mount(httplib::Server& server) {
    auto send = [](httplib::Response& res, const ApiResponse& r) {
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    auto guarded = [send](auto handler) {
      return [send, handler](const httplib::Request& req, httplib::Response& res) {
        try {
          send(res, handler(req));
        } catch (const std::exception& e) {
          send(res, error_response(500, "InternalError", e.what()));
        }
      };
    };
    server.Post("/api/generate", guarded([this](const httplib::Request& req) { return generate(req.body); }));
    server.Post("/api/validate", guarded([this](const httplib::Request& req) { return validate(req.body); }));
    server.Post("/api/render", guarded([this](const httplib::Request& req) {
                  return render(req.body, req.has_param("format") ? req.get_param_value("format") : "");
                }));
    server.Get("/api/health", guarded([this](const httplib::Request&) { return health(); }));
    if (config_.static_dir) server.set_mount_point("/", config_.static_dir->string());
  }

  const ServiceConfig& config() const { return config_; }

 private:
  ServiceConfig config_;
  std::shared_ptr<llm::ChatTransport> transport_;
  llm::TraceStore traces_;
  std::mutex health_mutex_;
  std::optional<std::chrono::steady_clock::time_point> last_probe_;
  bool reachable_ = false;
};

}  // namespace q2d::service
