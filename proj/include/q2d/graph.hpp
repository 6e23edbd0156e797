#pragma once

// Diagram intermediate representation: nodes, edges and nested packages,
// plus strict parsing and canonical serialization of the JSON wire format.

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "q2d/expected.hpp"

namespace q2d {

using Json = nlohmann::ordered_json;

enum class NodeKind { Class, Variable, Function, Entity, Method, Field };
enum class Visibility { Private, Protected, PackagePrivate, Public };
enum class DetailLevel { Minimal, Medium, Full };

inline constexpr std::array<NodeKind, 6> kAllNodeKinds = {
    NodeKind::Class,  NodeKind::Variable, NodeKind::Function,
    NodeKind::Entity, NodeKind::Method,   NodeKind::Field};
inline constexpr std::array<Visibility, 4> kAllVisibilities = {
    Visibility::Private, Visibility::Protected, Visibility::PackagePrivate, Visibility::Public};
inline constexpr std::array<DetailLevel, 3> kAllDetailLevels = {
    DetailLevel::Minimal, DetailLevel::Medium, DetailLevel::Full};

inline std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Class: return "class";
    case NodeKind::Variable: return "variable";
    case NodeKind::Function: return "function";
    case NodeKind::Entity: return "entity";
    case NodeKind::Method: return "method";
    case NodeKind::Field: return "field";
  }
  return "";
}

inline std::string_view to_string(Visibility v) {
  switch (v) {
    case Visibility::Private: return "private";
    case Visibility::Protected: return "protected";
    case Visibility::PackagePrivate: return "package private";
    case Visibility::Public: return "public";
  }
  return "";
}

inline std::string_view to_string(DetailLevel l) {
  switch (l) {
    case DetailLevel::Minimal: return "minimal";
    case DetailLevel::Medium: return "medium";
    case DetailLevel::Full: return "full";
  }
  return "";
}

inline std::optional<NodeKind> node_kind_from_string(std::string_view s) {
  for (auto k : kAllNodeKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline std::optional<Visibility> visibility_from_string(std::string_view s) {
  for (auto v : kAllVisibilities)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// Accepts "moderate" as an alias of medium; query metadata uses that name.
inline std::optional<DetailLevel> detail_level_from_string(std::string_view s) {
  if (s == "moderate") return DetailLevel::Medium;
  for (auto l : kAllDetailLevels)
    if (to_string(l) == s) return l;
  return std::nullopt;
}

struct Node {
  NodeKind type = NodeKind::Class;
  std::string name;
  std::string node_id;
  std::string description;
  Visibility visibility = Visibility::Public;
  std::optional<std::string> return_type;
  std::optional<std::string> params;
  std::optional<std::string> source_class_id;

  bool is_member() const { return type == NodeKind::Method || type == NodeKind::Field; }
  bool operator==(const Node&) const = default;
};

struct Edge {
  std::string node_id_from;
  std::string node_id_to;
  std::optional<std::string> description;

  bool operator==(const Edge&) const = default;
};

struct Package {
  std::string package_id;
  std::vector<std::string> children;
  std::optional<std::string> description;

  bool operator==(const Package&) const = default;
};

struct Graph {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::vector<Package> packages;

  const Node* find_node(std::string_view id) const {
    auto it = std::find_if(nodes.begin(), nodes.end(), [&](const Node& n) { return n.node_id == id; });
    return it == nodes.end() ? nullptr : &*it;
  }
  const Package* find_package(std::string_view id) const {
    auto it = std::find_if(packages.begin(), packages.end(),
                           [&](const Package& p) { return p.package_id == id; });
    return it == packages.end() ? nullptr : &*it;
  }

  bool operator==(const Graph&) const = default;
};

struct DiagramResponse {
  Graph minimal_version;
  Graph medium_version;
  Graph full_version;
  std::string text_answer;

  const Graph& version(DetailLevel level) const {
    switch (level) {
      case DetailLevel::Minimal: return minimal_version;
      case DetailLevel::Medium: return medium_version;
      case DetailLevel::Full: return full_version;
    }
    return full_version;
  }
  bool operator==(const DiagramResponse&) const = default;
};

struct ParseError {
  enum class Kind { BrokenJson, SchemaError, MissingVersion };
  Kind kind = Kind::BrokenJson;
  std::string message;
  std::string path = "$";
  std::optional<DetailLevel> missing_level;
};

inline std::string_view to_string(ParseError::Kind k) {
  switch (k) {
    case ParseError::Kind::BrokenJson: return "BrokenJson";
    case ParseError::Kind::SchemaError: return "SchemaError";
    case ParseError::Kind::MissingVersion: return "MissingVersion";
  }
  return "";
}

using Warnings = std::vector<std::string>;

namespace detail {

struct SchemaViolation {
  std::string message;
  std::string path;
};

inline const Json& require(const Json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaViolation{std::string("missing required field \"") + key + "\"", path};
  return *it;
}

inline std::string require_string(const Json& obj, const char* key, const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_string()) throw SchemaViolation{std::string("field \"") + key + "\" must be a string", path + "." + key};
  return v.get<std::string>();
}

// Absent, null and "" all mean "not provided".
inline std::optional<std::string> optional_string(const Json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw SchemaViolation{std::string("field \"") + key + "\" must be a string or null", path + "." + key};
  auto s = it->get<std::string>();
  if (s.empty()) return std::nullopt;
  return s;
}

template <std::size_t N>
inline void warn_unknown(const Json& obj, const std::array<std::string_view, N>& known, const std::string& path,
                         Warnings* warnings) {
  if (!warnings) return;
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      warnings->push_back("ignored unknown field \"" + key + "\" at " + path);
  }
}

inline Node node_from_json(const Json& j, const std::string& path, Warnings* warnings) {
  if (!j.is_object()) throw SchemaViolation{"node must be an object", path};
  static constexpr std::array<std::string_view, 8> known = {
      "type", "name", "node_id", "description", "visibility", "return_type", "params", "source_class_id"};
  warn_unknown(j, known, path, warnings);
  Node n;
  auto type = require_string(j, "type", path);
  auto kind = node_kind_from_string(type);
  if (!kind) throw SchemaViolation{"unknown node type \"" + type + "\"", path + ".type"};
  n.type = *kind;
  n.name = require_string(j, "name", path);
  n.node_id = require_string(j, "node_id", path);
  n.description = require_string(j, "description", path);
  if (n.description.empty() && warnings) warnings->push_back("empty description at " + path);
  auto vis = require_string(j, "visibility", path);
  auto v = visibility_from_string(vis);
  if (!v) throw SchemaViolation{"unknown visibility \"" + vis + "\"", path + ".visibility"};
  n.visibility = *v;
  n.return_type = optional_string(j, "return_type", path);
  n.params = optional_string(j, "params", path);
  n.source_class_id = optional_string(j, "source_class_id", path);
  return n;
}

inline Edge edge_from_json(const Json& j, const std::string& path, Warnings* warnings) {
  if (!j.is_object()) throw SchemaViolation{"edge must be an object", path};
  static constexpr std::array<std::string_view, 3> known = {"node_id_from", "node_id_to", "description"};
  warn_unknown(j, known, path, warnings);
  Edge e;
  e.node_id_from = require_string(j, "node_id_from", path);
  e.node_id_to = require_string(j, "node_id_to", path);
  if (e.node_id_from.empty()) throw SchemaViolation{"empty node_id_from", path + ".node_id_from"};
  if (e.node_id_to.empty()) throw SchemaViolation{"empty node_id_to", path + ".node_id_to"};
  e.description = optional_string(j, "description", path);
  return e;
}

inline Package package_from_json(const Json& j, const std::string& path, Warnings* warnings) {
  if (!j.is_object()) throw SchemaViolation{"package must be an object", path};
  static constexpr std::array<std::string_view, 3> known = {"package_id", "children", "description"};
  warn_unknown(j, known, path, warnings);
  Package p;
  p.package_id = require_string(j, "package_id", path);
  const Json& children = require(j, "children", path);
  if (!children.is_array()) throw SchemaViolation{"children must be an array", path + ".children"};
  for (std::size_t i = 0; i < children.size(); ++i) {
    if (!children[i].is_string())
      throw SchemaViolation{"child ids must be strings", path + ".children[" + std::to_string(i) + "]"};
    p.children.push_back(children[i].get<std::string>());
  }
  p.description = optional_string(j, "description", path);
  return p;
}

inline Graph graph_from_json(const Json& j, const std::string& path, Warnings* warnings) {
  if (!j.is_object()) throw SchemaViolation{"graph must be an object", path};
  static constexpr std::array<std::string_view, 3> known = {"nodes", "edges", "packages"};
  warn_unknown(j, known, path, warnings);
  Graph g;
  auto list = [&](const char* key) -> const Json& {
    const Json& v = require(j, key, path);
    if (!v.is_array()) throw SchemaViolation{std::string("\"") + key + "\" must be an array", path + "." + key};
    return v;
  };
  const Json& nodes = list("nodes");
  const Json& edges = list("edges");
  const Json& packages = list("packages");
  for (std::size_t i = 0; i < nodes.size(); ++i)
    g.nodes.push_back(node_from_json(nodes[i], path + ".nodes[" + std::to_string(i) + "]", warnings));
  for (std::size_t i = 0; i < edges.size(); ++i)
    g.edges.push_back(edge_from_json(edges[i], path + ".edges[" + std::to_string(i) + "]", warnings));
  for (std::size_t i = 0; i < packages.size(); ++i)
    g.packages.push_back(package_from_json(packages[i], path + ".packages[" + std::to_string(i) + "]", warnings));
  return g;
}

inline Expected<Json, ParseError> parse_json_text(std::string_view text) {
  Json j = Json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return unexpected(ParseError{ParseError::Kind::BrokenJson, "malformed JSON", "$", {}});
  return j;
}

}  // namespace detail

inline Json graph_to_json(const Graph& g) {
  Json j = Json::object();
  j["nodes"] = Json::array();
  for (const auto& n : g.nodes) {
    Json o = Json::object();
    o["type"] = to_string(n.type);
    o["name"] = n.name;
    o["node_id"] = n.node_id;
    o["description"] = n.description;
    o["visibility"] = to_string(n.visibility);
    if (n.return_type && !n.return_type->empty()) o["return_type"] = *n.return_type;
    if (n.params && !n.params->empty()) o["params"] = *n.params;
    if (n.source_class_id && !n.source_class_id->empty()) o["source_class_id"] = *n.source_class_id;
    j["nodes"].push_back(std::move(o));
  }
  j["edges"] = Json::array();
  for (const auto& e : g.edges) {
    Json o = Json::object();
    o["node_id_from"] = e.node_id_from;
    o["node_id_to"] = e.node_id_to;
    if (e.description && !e.description->empty()) o["description"] = *e.description;
    j["edges"].push_back(std::move(o));
  }
  j["packages"] = Json::array();
  for (const auto& p : g.packages) {
    Json o = Json::object();
    o["package_id"] = p.package_id;
    o["children"] = p.children;
    if (p.description && !p.description->empty()) o["description"] = *p.description;
    j["packages"].push_back(std::move(o));
  }
  return j;
}

/// Canonical compact serialization with a fixed key order. Two equal graphs
/// always serialize to identical bytes.
inline std::string serialize_graph(const Graph& g, int indent = -1) {
  return graph_to_json(g).dump(indent, ' ', false, Json::error_handler_t::replace);
}

/// Parses JSON already decoded; used by callers that hold a graph inside a larger document.
inline Expected<Graph, ParseError> graph_from_json(const Json& j, Warnings* warnings = nullptr,
                                                   const std::string& path = "$") {
  try {
    return detail::graph_from_json(j, path, warnings);
  } catch (const detail::SchemaViolation& v) {
    return unexpected(ParseError{ParseError::Kind::SchemaError, v.message, v.path, {}});
  }
}

/// Strict parse: the whole text must be one JSON object matching the graph
/// schema. Unknown fields are ignored and reported through `warnings`.
inline Expected<Graph, ParseError> parse_graph(std::string_view text, Warnings* warnings = nullptr) {
  auto j = detail::parse_json_text(text);
  if (!j) return unexpected(j.error());
  return graph_from_json(*j, warnings);
}

/// Pulls the JSON payload out of chat-model output. A fenced code block wins
/// if present; otherwise (and inside the fence) the largest balanced top-level
/// `{...}` span is returned. Returns nullopt when no balanced object exists.
inline std::optional<std::string> extract_json_object(std::string_view text) {
  std::string_view body = text;
  if (auto open = text.find("```"); open != std::string_view::npos) {
    auto line_end = text.find('\n', open);
    if (line_end != std::string_view::npos) {
      auto close = text.find("```", line_end + 1);
      if (close != std::string_view::npos) {
        auto fenced = text.substr(line_end + 1, close - line_end - 1);
        if (fenced.find('{') != std::string_view::npos) body = fenced;
      }
    }
  }

  std::string_view best;
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] != '{') {
      ++i;
      continue;
    }
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    std::size_t j = i;
    for (; j < body.size(); ++j) {
      char c = body[j];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) break;
    }
    if (j >= body.size()) {
      ++i;
      continue;
    }
    auto span = body.substr(i, j - i + 1);
    if (span.size() > best.size()) best = span;
    i = j + 1;
  }
  if (best.empty()) return std::nullopt;
  return std::string(best);
}

inline Json diagram_response_to_json(const DiagramResponse& r) {
  Json j = Json::object();
  j["minimal_version"] = graph_to_json(r.minimal_version);
  j["medium_version"] = graph_to_json(r.medium_version);
  j["full_version"] = graph_to_json(r.full_version);
  j["text_answer"] = r.text_answer;
  return j;
}

/// Lenient on surrounding prose and markdown fences, strict on the object itself.
inline Expected<DiagramResponse, ParseError> parse_diagram_response(std::string_view text,
                                                                    Warnings* warnings = nullptr) {
  auto extracted = extract_json_object(text);
  if (!extracted) return unexpected(ParseError{ParseError::Kind::BrokenJson, "no JSON object found", "$", {}});
  auto j = detail::parse_json_text(*extracted);
  if (!j) return unexpected(j.error());

  DiagramResponse r;
  for (auto level : kAllDetailLevels) {
    std::string key = std::string(to_string(level)) + "_version";
    auto it = j->find(key);
    if (it == j->end())
      return unexpected(ParseError{ParseError::Kind::MissingVersion, "missing \"" + key + "\"", "$", level});
    auto g = graph_from_json(*it, warnings, "$." + key);
    if (!g) return unexpected(g.error());
    switch (level) {
      case DetailLevel::Minimal: r.minimal_version = std::move(*g); break;
      case DetailLevel::Medium: r.medium_version = std::move(*g); break;
      case DetailLevel::Full: r.full_version = std::move(*g); break;
    }
  }
  auto answer = j->find("text_answer");
  if (answer == j->end())
    return unexpected(ParseError{ParseError::Kind::SchemaError, "missing required field \"text_answer\"", "$", {}});
  if (!answer->is_string())
    return unexpected(ParseError{ParseError::Kind::SchemaError, "\"text_answer\" must be a string", "$.text_answer", {}});
  r.text_answer = answer->get<std::string>();
  if (warnings) {
    for (const auto& [key, _] : j->items()) {
      if (key != "minimal_version" && key != "medium_version" && key != "full_version" && key != "text_answer")
        warnings->push_back("ignored unknown field \"" + key + "\" at $");
    }
  }
  return r;
}

}  // namespace q2d
