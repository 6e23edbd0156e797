#pragma once

// Chat-completion client and the validate-and-repair generation loop.
//
// Outputs are checked after the fact instead of being constrained at decode
// time: an attempt that does not parse, or whose graph has an unacceptable
// defect, is sent back with its defect list until `repair_attempts` runs out.
// Every trace records that this loop was used.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include <httplib.h>

#include "q2d/graph.hpp"
#include "q2d/lint.hpp"
#include "q2d/prompts.hpp"

namespace q2d::llm {

inline constexpr const char* kApiKeyEnv = "Q2D_API_KEY";

struct GenerationConfig {
  std::string endpoint = "http://127.0.0.1:8000/v1";
  std::string model = "default";
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 8192;
  int repair_attempts = 2;
  std::chrono::seconds timeout{120};

  /// Greedy decoding, used for diagrams.
  static GenerationConfig for_diagrams() { return {}; }
  /// Sampling used for query synthesis.
  static GenerationConfig for_queries() {
    GenerationConfig c;
    c.temperature = 0.6;
    c.top_p = 0.9;
    return c;
  }
  void check() const {
    if (temperature < 0) throw std::invalid_argument("temperature must be >= 0");
    if (repair_attempts < 0) throw std::invalid_argument("repair_attempts must be >= 0");
  }
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0;
  double top_p = 1;
  int max_tokens = 0;
};

inline Json to_json(const ChatRequest& r) {
  Json msgs = Json::array();
  for (const auto& m : r.messages) msgs.push_back(Json{{"role", m.role}, {"content", m.content}});
  return Json{{"model", r.model},
              {"messages", std::move(msgs)},
              {"temperature", r.temperature},
              {"top_p", r.top_p},
              {"max_tokens", r.max_tokens}};
}

struct EndpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Anything that turns a chat request into the assistant's reply text.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  /// Throws EndpointError when the endpoint cannot produce a reply.
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual bool reachable() { return true; }
};

/// OpenAI-compatible `POST {endpoint}/chat/completions`. A bearer token is
/// taken from Q2D_API_KEY when set. Safe to share between threads: each call
/// opens its own connection.
class HttpChatTransport : public ChatTransport {
 public:
  explicit HttpChatTransport(std::string endpoint, std::chrono::seconds timeout = std::chrono::seconds{120})
      : timeout_(timeout) {
    auto scheme = endpoint.find("://");
    auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
    auto slash = endpoint.find('/', host_start);
    base_ = endpoint.substr(0, slash);
    prefix_ = slash == std::string::npos ? "" : endpoint.substr(slash);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (const char* key = std::getenv(kApiKeyEnv)) api_key_ = key;
  }

  std::string complete(const ChatRequest& request) override {
    auto cli = client();
    auto res = cli.Post(prefix_ + "/chat/completions", headers(), to_json(request).dump(), "application/json");
    if (!res) throw EndpointError("endpoint unreachable: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw EndpointError("endpoint returned HTTP " + std::to_string(res->status));
    Json body = Json::parse(res->body, nullptr, false);
    if (body.is_discarded()) throw EndpointError("endpoint returned malformed JSON");
    try {
      return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception&) {
      throw EndpointError("endpoint reply has no choices[0].message.content");
    }
  }

  bool reachable() override {
    auto cli = client();
    cli.set_connection_timeout(std::chrono::seconds{2});
    auto res = cli.Get(prefix_ + "/models", headers());
    return static_cast<bool>(res);
  }

 private:
  httplib::Client client() const {
    httplib::Client cli(base_);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_write_timeout(timeout_);
    return cli;
  }
  httplib::Headers headers() const {
    httplib::Headers h;
    if (!api_key_.empty()) h.emplace("Authorization", "Bearer " + api_key_);
    return h;
  }

  std::string base_;
  std::string prefix_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

// ---------------------------------------------------------------------------
// Traces

struct Attempt {
  ChatRequest request;
  std::string response;
  std::optional<std::string> error;  // parse or endpoint failure
  std::vector<DefectReport> reports;  // one per linted graph
};

struct GenerationTrace {
  std::string task;  // "queries" | "diagram"
  std::string mode;  // "base" | "finetuned" | ""
  std::vector<Attempt> attempts;
  std::string status;
};

inline Json to_json(const GenerationTrace& t) {
  Json attempts = Json::array();
  for (const auto& a : t.attempts) {
    Json reports = Json::array();
    for (const auto& r : a.reports) reports.push_back(to_json(r));
    attempts.push_back(Json{{"request", to_json(a.request)},
                            {"response", a.response},
                            {"error", a.error ? Json(*a.error) : Json(nullptr)},
                            {"defects", std::move(reports)}});
  }
  return Json{{"task", t.task},
              {"mode", t.mode},
              {"decoding", "validate-and-repair"},
              {"status", t.status},
              {"attempt_count", t.attempts.size()},
              {"attempts", std::move(attempts)}};
}

/// Append-only JSONL trace file; one line per trace, serialized writers.
class TraceStore {
 public:
  explicit TraceStore(std::filesystem::path path) : path_(std::move(path)) {}

  void append(const std::string& trace_id, const GenerationTrace& trace) {
    Json line = to_json(trace);
    line["trace_id"] = trace_id;
    auto text = line.dump(-1, ' ', false, Json::error_handler_t::replace) + "\n";
    std::lock_guard lock(mutex_);
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

inline std::string new_trace_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char hex[] = "0123456789abcdef";
  std::string id;
  auto v = rng();
  for (int i = 0; i < 16; ++i, v >>= 4) id += hex[v & 0xF];
  return id;
}

// ---------------------------------------------------------------------------
// Generation

enum class Mode { Base, Finetuned };

inline std::string_view to_string(Mode m) { return m == Mode::Base ? "base" : "finetuned"; }
inline std::optional<Mode> mode_from_string(std::string_view s) {
  if (s == "base") return Mode::Base;
  if (s == "finetuned") return Mode::Finetuned;
  return std::nullopt;
}

enum class Status { Ok, ExhaustedRepairs, EndpointError };

inline std::string_view to_string(Status s) {
  switch (s) {
    case Status::Ok: return "ok";
    case Status::ExhaustedRepairs: return "exhausted_repairs";
    case Status::EndpointError: return "endpoint_error";
  }
  return "";
}

using DiagramPayload = std::variant<Graph, DiagramResponse>;

struct DiagramResult {
  Status status = Status::Ok;
  std::optional<DiagramPayload> payload;
  GenerationTrace trace;
  std::string error;

  /// The graph at `level`: the single graph in finetuned mode, the matching version in base mode.
  const Graph* graph(DetailLevel level) const {
    if (!payload) return nullptr;
    if (const auto* g = std::get_if<Graph>(&*payload)) return g;
    return &std::get<DiagramResponse>(*payload).version(level);
  }
  std::optional<std::string> text_answer() const {
    if (!payload) return std::nullopt;
    if (const auto* r = std::get_if<DiagramResponse>(&*payload)) return r->text_answer;
    return std::nullopt;
  }
};

struct QueryResult {
  Status status = Status::Ok;
  std::optional<prompts::QueryCandidateSet> queries;
  GenerationTrace trace;
  std::string error;
};

namespace detail {

inline std::string repair_message(const Json& problems) {
  return "Your previous answer cannot be used because of the defects listed below. "
         "Fix every defect and answer again with the corrected output only, following the same template.\n"
         "Defects:\n" +
         problems.dump(2, ' ', false, Json::error_handler_t::replace);
}

inline ChatRequest make_request(const GenerationConfig& cfg, std::vector<ChatMessage> messages) {
  return ChatRequest{cfg.model, std::move(messages), cfg.temperature, cfg.top_p, cfg.max_tokens};
}

// (unacceptable, severe, minor) totals; lower is better.
inline std::tuple<std::size_t, std::size_t, std::size_t> badness(const std::vector<DefectReport>& reports) {
  std::size_t u = 0, s = 0, m = 0;
  for (const auto& r : reports) {
    u += r.count(Severity::Unacceptable);
    s += r.count(Severity::Severe);
    m += r.count(Severity::Minor);
  }
  return {u, s, m};
}

template <class Payload>
struct LoopOutcome {
  Status status = Status::Ok;
  std::optional<Payload> payload;
  std::string error;
};

// Runs one prompt through the repair loop. `check` parses a reply into a
// payload and fills `problems`; the attempt is accepted when it yields a
// payload and no problems.
template <class Payload, class Check>
LoopOutcome<Payload> repair_loop(const GenerationConfig& cfg, ChatTransport& transport,
                                        const std::string& prompt, GenerationTrace& trace, Check&& check) {
  cfg.check();
  LoopOutcome<Payload> out;
  std::optional<std::pair<std::tuple<std::size_t, std::size_t, std::size_t>, Payload>> best;
  std::vector<ChatMessage> messages = {{"user", prompt}};
  const int max_attempts = 1 + cfg.repair_attempts;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Attempt a;
    a.request = make_request(cfg, messages);
    try {
      a.response = transport.complete(a.request);
    } catch (const EndpointError& e) {
      a.error = e.what();
      trace.attempts.push_back(std::move(a));
      out.status = Status::EndpointError;
      out.error = e.what();
      trace.status = std::string(to_string(out.status));
      return out;
    }
    Json problems = Json::array();
    std::optional<Payload> payload = check(a.response, a, problems);
    bool acceptable = payload && problems.empty();
    if (payload) {
      auto score = badness(a.reports);
      if (!best || score <= best->first) best.emplace(score, *payload);
    }
    std::string reply = a.response;
    trace.attempts.push_back(std::move(a));
    if (acceptable) {
      out.payload = std::move(payload);
      out.status = Status::Ok;
      trace.status = std::string(to_string(out.status));
      return out;
    }
    messages = {{"user", prompt}, {"assistant", reply}, {"user", repair_message(problems)}};
  }
  out.status = Status::ExhaustedRepairs;
  out.error = "no acceptable output after " + std::to_string(max_attempts) + " attempts";
  if (best) out.payload = std::move(best->second);
  trace.status = std::string(to_string(out.status));
  return out;
}

inline void collect_unacceptable(const DefectReport& r, Json& problems) {
  for (const auto& d : r.defects)
    if (d.severity == Severity::Unacceptable) {
      Json p = to_json(d);
      if (!r.graph_id.empty()) p["graph"] = r.graph_id;
      problems.push_back(std::move(p));
    }
}

inline Json parse_problem(const ParseError& e) {
  return Json{{"kind", "broken_json"},
              {"severity", "unacceptable"},
              {"subjects", {e.path}},
              {"message", std::string(to_string(e.kind)) + ": " + e.message}};
}

}  // namespace detail

/// Asks the endpoint for a diagram answering `query` about `code`. Base mode
/// uses the full instruction prompt and expects all three detail versions;
/// finetuned mode uses the short prompt for one `level` and expects a graph.
inline DiagramResult generate_diagram(const GenerationConfig& cfg, ChatTransport& transport, std::string_view code,
                                      std::string_view query, Mode mode, DetailLevel level) {
  DiagramResult result;
  result.trace.task = "diagram";
  result.trace.mode = std::string(to_string(mode));
  std::string prompt = mode == Mode::Base ? prompts::build_base_diagram_prompt(code, query)
                                          : prompts::build_finetuned_prompt(code, query, level);

  auto check = [&](const std::string& reply, Attempt& a, Json& problems) -> std::optional<DiagramPayload> {
    if (mode == Mode::Finetuned) {
      auto extracted = extract_json_object(reply);
      auto g = extracted ? parse_graph(*extracted)
                         : Expected<Graph, ParseError>(unexpected(ParseError{ParseError::Kind::BrokenJson,
                                                                             "no JSON object found", "$", {}}));
      if (!g) {
        a.error = g.error().message;
        problems.push_back(detail::parse_problem(g.error()));
        return std::nullopt;
      }
      a.reports.push_back(lint(*g, code, std::string(to_string(level))));
      detail::collect_unacceptable(a.reports.back(), problems);
      return DiagramPayload{std::move(*g)};
    }
    auto r = parse_diagram_response(reply);
    if (!r) {
      a.error = r.error().message;
      problems.push_back(detail::parse_problem(r.error()));
      return std::nullopt;
    }
    for (auto l : kAllDetailLevels) {
      a.reports.push_back(lint(r->version(l), code, std::string(to_string(l)) + "_version"));
      detail::collect_unacceptable(a.reports.back(), problems);
    }
    return DiagramPayload{std::move(*r)};
  };

  auto out = detail::repair_loop<DiagramPayload>(cfg, transport, prompt, result.trace, check);
  result.status = out.status;
  result.payload = std::move(out.payload);
  result.error = std::move(out.error);
  return result;
}

/// Query synthesis for one code file.
inline QueryResult generate_queries(const GenerationConfig& cfg, ChatTransport& transport, std::string_view code) {
  QueryResult result;
  result.trace.task = "queries";
  std::string prompt = prompts::build_query_prompt(code);
  auto check = [](const std::string& reply, Attempt& a, Json& problems) -> std::optional<prompts::QueryCandidateSet> {
    auto q = prompts::parse_query_output(reply);
    if (!q) {
      a.error = q.error().message;
      problems.push_back(Json{{"kind", q.error().kind == prompts::QueryParseError::Kind::MissingTag ? "missing_tag"
                                                                                                     : "bad_array"},
                              {"message", q.error().message}});
      return std::nullopt;
    }
    return *q;
  };
  auto out = detail::repair_loop<prompts::QueryCandidateSet>(cfg, transport, prompt, result.trace, check);
  result.status = out.status;
  result.queries = std::move(out.payload);
  result.error = std::move(out.error);
  return result;
}

}  // namespace q2d::llm
