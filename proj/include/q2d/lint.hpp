#pragma once

// Structural defect checker for diagram graphs and the corpus-level defect
// statistics built on top of it.

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "q2d/graph.hpp"
#include "q2d/render.hpp"

namespace q2d {

enum class Severity { Minor = 0, Severe = 1, Unacceptable = 2 };

inline std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Minor: return "minor";
    case Severity::Severe: return "severe";
    case Severity::Unacceptable: return "unacceptable";
  }
  return "";
}

inline std::optional<Severity> severity_from_string(std::string_view s) {
  if (s == "minor" || s == "low") return Severity::Minor;
  if (s == "severe" || s == "med") return Severity::Severe;
  if (s == "unacceptable") return Severity::Unacceptable;
  return std::nullopt;
}

enum class DefectKind {
  // minor
  SpacesInNodeNames,
  SpacesInPackageIds,
  SingleNode,
  NoEdges,
  EdgeToItself,
  RepeatedEdges,
  MultiEdgeBetweenPair,
  EdgeToSourceClass,
  NoEdgeFromSourceClass,
  InvalidNodeName,
  InvalidNodeId,
  InvalidPackageId,
  NameNotFoundInCode,
  SingleNodePackage,
  MemberOutsideClassPackage,
  // severe
  NonUniquePackageIds,
  NonUniqueNodeIds,
  EdgeToInvalidId,
  EmptySourceClassId,
  PackageWithoutNodes,
  ChildInMultiplePackages,
  MorePackagesThanNodes,
  PackageRecursion,
  MultipleConnectedComponents,
  // unacceptable
  BrokenJson,
  NonDrawable,
};

struct DefectInfo {
  DefectKind kind;
  std::string_view name;
  Severity severity;
  std::string_view title;
};

inline constexpr std::array<DefectInfo, 26> kDefectCatalog = {{
    {DefectKind::SpacesInNodeNames, "spaces_in_node_names", Severity::Minor, "Spaces in node names"},
    {DefectKind::SpacesInPackageIds, "spaces_in_package_ids", Severity::Minor, "Spaces in package ids"},
    {DefectKind::SingleNode, "single_node", Severity::Minor, "Single node"},
    {DefectKind::NoEdges, "no_edges", Severity::Minor, "No edges"},
    {DefectKind::EdgeToItself, "edge_to_itself", Severity::Minor, "Edge to itself"},
    {DefectKind::RepeatedEdges, "repeated_edges", Severity::Minor, "Repeated edges"},
    {DefectKind::MultiEdgeBetweenPair, "multi_edge_between_pair", Severity::Minor,
     "More than one edge between two nodes"},
    {DefectKind::EdgeToSourceClass, "edge_to_source_class", Severity::Minor, "Edge to source class"},
    {DefectKind::NoEdgeFromSourceClass, "no_edge_from_source_class", Severity::Minor, "No edge from source class"},
    {DefectKind::InvalidNodeName, "invalid_node_name", Severity::Minor, "Invalid node name"},
    {DefectKind::InvalidNodeId, "invalid_node_id", Severity::Minor, "Invalid node id"},
    {DefectKind::InvalidPackageId, "invalid_package_id", Severity::Minor, "Invalid package id"},
    {DefectKind::NameNotFoundInCode, "name_not_found_in_code", Severity::Minor, "Name of node not found in code"},
    {DefectKind::SingleNodePackage, "single_node_package", Severity::Minor, "Single-node package"},
    {DefectKind::MemberOutsideClassPackage, "member_outside_class_package", Severity::Minor,
     "Class is in the package, but its method/field is not in the same package"},
    {DefectKind::NonUniquePackageIds, "non_unique_package_ids", Severity::Severe, "Non-unique packages ids"},
    {DefectKind::NonUniqueNodeIds, "non_unique_node_ids", Severity::Severe, "Non-unique nodes ids"},
    {DefectKind::EdgeToInvalidId, "edge_to_invalid_id", Severity::Severe, "Edges from/to non-valid node ids"},
    {DefectKind::EmptySourceClassId, "empty_source_class_id", Severity::Severe,
     "Methods/fields have empty source class id"},
    {DefectKind::PackageWithoutNodes, "package_without_nodes", Severity::Severe, "Packages without nodes"},
    {DefectKind::ChildInMultiplePackages, "child_in_multiple_packages", Severity::Severe,
     "Child in multiple packages"},
    {DefectKind::MorePackagesThanNodes, "more_packages_than_nodes", Severity::Severe, "More packages than nodes"},
    {DefectKind::PackageRecursion, "package_recursion", Severity::Severe, "Packages recursion"},
    {DefectKind::MultipleConnectedComponents, "multiple_connected_components", Severity::Severe,
     "Multiple connected components"},
    {DefectKind::BrokenJson, "broken_json", Severity::Unacceptable, "Broken JSON"},
    {DefectKind::NonDrawable, "non_drawable", Severity::Unacceptable, "Non-drawable diagram"},
}};

inline const DefectInfo& defect_info(DefectKind k) { return kDefectCatalog[static_cast<std::size_t>(k)]; }
inline std::string_view to_string(DefectKind k) { return defect_info(k).name; }
inline Severity severity_of(DefectKind k) { return defect_info(k).severity; }

inline std::optional<DefectKind> defect_kind_from_string(std::string_view s) {
  for (const auto& info : kDefectCatalog)
    if (info.name == s) return info.kind;
  return std::nullopt;
}

struct Defect {
  DefectKind kind;
  Severity severity;
  std::vector<std::string> subjects;
  std::string message;

  bool operator==(const Defect&) const = default;
};

struct DefectReport {
  std::string graph_id;
  std::size_t node_count = 0;
  std::vector<Defect> defects;
  std::array<std::size_t, 3> counts_by_severity{};

  std::size_t count(Severity s) const { return counts_by_severity[static_cast<std::size_t>(s)]; }
  std::size_t count_at_least(Severity threshold) const {
    std::size_t n = 0;
    for (auto s : {Severity::Minor, Severity::Severe, Severity::Unacceptable})
      if (s >= threshold) n += count(s);
    return n;
  }
  bool has(DefectKind k) const {
    return std::any_of(defects.begin(), defects.end(), [k](const Defect& d) { return d.kind == k; });
  }
  std::optional<Severity> worst() const {
    for (auto s : {Severity::Unacceptable, Severity::Severe, Severity::Minor})
      if (count(s) > 0) return s;
    return std::nullopt;
  }
  bool operator==(const DefectReport&) const = default;
};

/// Undirected components over explicit edges plus the implicit link between
/// every method/field and its source class. Node ids are deduplicated; each
/// component lists ids in node order and components are ordered by their
/// first node.
inline std::vector<std::vector<std::string>> connected_components(const Graph& g) {
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& n : g.nodes)
    if (index.emplace(n.node_id, ids.size()).second) ids.push_back(n.node_id);

  std::vector<std::size_t> parent(ids.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto unite = [&](const std::string& a, const std::string& b) {
    auto ia = index.find(a);
    auto ib = index.find(b);
    if (ia == index.end() || ib == index.end()) return;
    auto ra = find(ia->second);
    auto rb = find(ib->second);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  };
  for (const auto& e : g.edges) unite(e.node_id_from, e.node_id_to);
  for (const auto& n : g.nodes)
    if (n.is_member() && n.source_class_id) unite(n.node_id, *n.source_class_id);

  std::map<std::size_t, std::vector<std::string>> by_root;
  for (std::size_t i = 0; i < ids.size(); ++i) by_root[find(i)].push_back(ids[i]);
  std::vector<std::vector<std::string>> out;
  for (auto& [_, members] : by_root) out.push_back(std::move(members));
  return out;
}

namespace detail {

inline bool has_space(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  });
}

inline bool is_invalid_identifier(std::string_view s) {
  if (s.empty()) return true;
  return std::any_of(s.begin(), s.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return u < 0x20 || u > 0x7E;
  });
}

class ReportBuilder {
 public:
  void add(DefectKind kind, std::vector<std::string> subjects, std::string message) {
    defects_.push_back(Defect{kind, severity_of(kind), std::move(subjects), std::move(message)});
  }

  DefectReport finish(std::string graph_id, std::size_t node_count) {
    std::sort(defects_.begin(), defects_.end(), [](const Defect& a, const Defect& b) {
      if (a.kind != b.kind) return a.kind < b.kind;
      return a.subjects < b.subjects;
    });
    defects_.erase(std::unique(defects_.begin(), defects_.end(),
                               [](const Defect& a, const Defect& b) {
                                 return a.kind == b.kind && a.subjects == b.subjects;
                               }),
                   defects_.end());
    DefectReport r;
    r.graph_id = std::move(graph_id);
    r.node_count = node_count;
    for (const auto& d : defects_) ++r.counts_by_severity[static_cast<std::size_t>(d.severity)];
    r.defects = std::move(defects_);
    return r;
  }

 private:
  std::vector<Defect> defects_;
};

inline std::string edge_ref(std::size_t i) { return "edges[" + std::to_string(i) + "]"; }

}  // namespace detail

/// Runs every structural check on a parsed graph. `source_code` enables the
/// name-in-code check; it is skipped otherwise. Defects come out sorted by
/// kind, then by subjects, one per (kind, subjects) pair.
inline DefectReport lint(const Graph& g, std::optional<std::string_view> source_code = std::nullopt,
                         std::string graph_id = {}) {
  using detail::edge_ref;
  detail::ReportBuilder rb;
  const auto& nodes = g.nodes;
  const auto& edges = g.edges;
  const auto& packages = g.packages;

  std::unordered_map<std::string, std::size_t> node_by_id;
  std::map<std::string, std::size_t> node_id_counts;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    node_by_id.emplace(nodes[i].node_id, i);
    ++node_id_counts[nodes[i].node_id];
  }
  std::map<std::string, std::size_t> package_id_counts;
  for (const auto& p : packages) ++package_id_counts[p.package_id];
  auto is_package = [&](const std::string& id) { return package_id_counts.count(id) > 0; };

  // Per-node checks.
  for (const auto& n : nodes) {
    if (detail::has_space(n.name))
      rb.add(DefectKind::SpacesInNodeNames, {n.node_id}, "node name \"" + n.name + "\" contains whitespace");
    if (detail::is_invalid_identifier(n.name))
      rb.add(DefectKind::InvalidNodeName, {n.node_id}, "node name \"" + n.name + "\" is empty or not printable ASCII");
    if (detail::is_invalid_identifier(n.node_id))
      rb.add(DefectKind::InvalidNodeId, {n.node_id}, "node id \"" + n.node_id + "\" is empty or not printable ASCII");
    if (source_code && n.type != NodeKind::Entity && source_code->find(n.name) == std::string_view::npos)
      rb.add(DefectKind::NameNotFoundInCode, {n.node_id}, "name \"" + n.name + "\" does not occur in the code");
    if (n.is_member() && !n.source_class_id)
      rb.add(DefectKind::EmptySourceClassId, {n.node_id},
             std::string(to_string(n.type)) + " \"" + n.node_id + "\" has no source class id");
  }
  for (const auto& [id, count] : node_id_counts)
    if (count > 1) rb.add(DefectKind::NonUniqueNodeIds, {id}, "node id \"" + id + "\" used " + std::to_string(count) + " times");

  if (nodes.size() == 1) rb.add(DefectKind::SingleNode, {}, "graph has a single node");
  if (!nodes.empty() && edges.empty()) rb.add(DefectKind::NoEdges, {}, "graph has no edges");

  // Edge checks.
  std::map<std::pair<std::string, std::string>, std::size_t> ordered_pairs;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    ++ordered_pairs[{e.node_id_from, e.node_id_to}];
    if (e.node_id_from == e.node_id_to)
      rb.add(DefectKind::EdgeToItself, {edge_ref(i)}, "edge starts and ends at \"" + e.node_id_from + "\"");
    for (const auto* end : {&e.node_id_from, &e.node_id_to}) {
      if (!node_by_id.count(*end) && !is_package(*end))
        rb.add(DefectKind::EdgeToInvalidId, {edge_ref(i)}, "edge endpoint \"" + *end + "\" is not a node id");
    }
    auto member_of = [&](const std::string& member, const std::string& cls) {
      auto it = node_by_id.find(member);
      if (it == node_by_id.end()) return false;
      const Node& m = nodes[it->second];
      return m.is_member() && m.source_class_id && *m.source_class_id == cls;
    };
    if (member_of(e.node_id_from, e.node_id_to) || member_of(e.node_id_to, e.node_id_from))
      rb.add(DefectKind::EdgeToSourceClass, {edge_ref(i)},
             "edge links a member and its own class (\"" + e.node_id_from + "\", \"" + e.node_id_to + "\")");
  }
  std::map<std::pair<std::string, std::string>, std::size_t> unordered_pairs;
  for (const auto& [pair, count] : ordered_pairs) {
    if (count > 1)
      rb.add(DefectKind::RepeatedEdges, {pair.first, pair.second},
             "edge \"" + pair.first + "\" -> \"" + pair.second + "\" repeated " + std::to_string(count) + " times");
    if (pair.first != pair.second) ++unordered_pairs[std::minmax(pair.first, pair.second)];
  }
  for (const auto& [pair, count] : unordered_pairs)
    if (count > 1)
      rb.add(DefectKind::MultiEdgeBetweenPair, {pair.first, pair.second},
             "nodes \"" + pair.first + "\" and \"" + pair.second + "\" are joined in both directions");

  // Source-class checks.
  std::set<std::string> incident;
  for (const auto& e : edges) {
    incident.insert(e.node_id_from);
    incident.insert(e.node_id_to);
  }
  std::set<std::string> owning_classes;
  for (const auto& n : nodes) {
    if (!n.is_member() || !n.source_class_id) continue;
    auto it = node_by_id.find(*n.source_class_id);
    if (it != node_by_id.end() && nodes[it->second].type == NodeKind::Class) owning_classes.insert(*n.source_class_id);
  }
  for (const auto& cls : owning_classes)
    if (!incident.count(cls))
      rb.add(DefectKind::NoEdgeFromSourceClass, {cls}, "class \"" + cls + "\" owns members but has no edges");

  // Package checks.
  for (const auto& [id, count] : package_id_counts) {
    if (count > 1)
      rb.add(DefectKind::NonUniquePackageIds, {id}, "package id \"" + id + "\" used " + std::to_string(count) + " times");
  }
  std::map<std::string, std::set<std::size_t>> containing;  // child id -> package indices
  for (std::size_t p = 0; p < packages.size(); ++p) {
    const auto& pkg = packages[p];
    if (detail::has_space(pkg.package_id))
      rb.add(DefectKind::SpacesInPackageIds, {pkg.package_id}, "package id \"" + pkg.package_id + "\" contains whitespace");
    if (detail::is_invalid_identifier(pkg.package_id))
      rb.add(DefectKind::InvalidPackageId, {pkg.package_id},
             "package id \"" + pkg.package_id + "\" is empty or not printable ASCII");
    if (pkg.children.size() == 1)
      rb.add(DefectKind::SingleNodePackage, {pkg.package_id}, "package \"" + pkg.package_id + "\" has a single child");
    for (const auto& c : pkg.children) containing[c].insert(p);
  }
  for (const auto& [child, where] : containing)
    if (where.size() > 1)
      rb.add(DefectKind::ChildInMultiplePackages, {child},
             "\"" + child + "\" is a child of " + std::to_string(where.size()) + " packages");

  for (const auto& pkg : packages) {
    std::set<std::string> seen{pkg.package_id};
    std::vector<std::string> stack(pkg.children.rbegin(), pkg.children.rend());
    bool has_node = false;
    while (!stack.empty() && !has_node) {
      auto cur = stack.back();
      stack.pop_back();
      if (node_by_id.count(cur)) {
        has_node = true;
      } else if (seen.insert(cur).second) {
        for (const auto& q : packages)
          if (q.package_id == cur) stack.insert(stack.end(), q.children.rbegin(), q.children.rend());
      }
    }
    if (!has_node)
      rb.add(DefectKind::PackageWithoutNodes, {pkg.package_id}, "package \"" + pkg.package_id + "\" contains no nodes");
  }
  if (packages.size() > nodes.size())
    rb.add(DefectKind::MorePackagesThanNodes, {},
           std::to_string(packages.size()) + " packages for " + std::to_string(nodes.size()) + " nodes");
  for (auto& group : package_cycles(g)) {
    std::string joined;
    for (const auto& id : group) joined += (joined.empty() ? "" : ", ") + id;
    rb.add(DefectKind::PackageRecursion, group, "packages nest recursively: " + joined);
  }

  // Membership placement: a member must share a package with its class, or sit outside all packages.
  std::map<std::string, std::set<std::size_t>> direct_packages;
  for (std::size_t p = 0; p < packages.size(); ++p)
    for (const auto& c : packages[p].children) direct_packages[c].insert(p);
  for (const auto& n : nodes) {
    if (!n.is_member() || !n.source_class_id) continue;
    auto cls = direct_packages.find(*n.source_class_id);
    if (cls == direct_packages.end()) continue;
    auto mine = direct_packages.find(n.node_id);
    if (mine == direct_packages.end()) continue;
    bool shared = std::any_of(mine->second.begin(), mine->second.end(),
                              [&](std::size_t p) { return cls->second.count(p) > 0; });
    if (!shared)
      rb.add(DefectKind::MemberOutsideClassPackage, {n.node_id},
             "member \"" + n.node_id + "\" is packaged apart from its class \"" + *n.source_class_id + "\"");
  }

  auto components = connected_components(g);
  if (components.size() > 1 && nodes.size() > 1) {
    std::vector<std::string> heads;
    for (const auto& c : components) heads.push_back(c.front());
    rb.add(DefectKind::MultipleConnectedComponents, heads,
           "graph splits into " + std::to_string(components.size()) + " connected components");
  }

  if (auto nd = preflight(g))
    rb.add(DefectKind::NonDrawable, {std::string(to_string(nd->reason))}, nd->detail);

  return rb.finish(std::move(graph_id), nodes.size());
}

/// Lints raw text: a text that does not parse as a graph yields a report
/// holding the single unacceptable broken_json defect.
inline DefectReport lint_text(std::string_view text, std::optional<std::string_view> source_code = std::nullopt,
                              std::string graph_id = {}) {
  auto g = parse_graph(text);
  if (!g) {
    detail::ReportBuilder rb;
    rb.add(DefectKind::BrokenJson, {g.error().path},
           std::string(to_string(g.error().kind)) + ": " + g.error().message);
    return rb.finish(std::move(graph_id), 0);
  }
  return lint(*g, source_code, std::move(graph_id));
}

// ---------------------------------------------------------------------------
// Aggregation

struct AggregateValues {
  double micro = 0;  // defects per node, pooled
  double macro = 0;  // mean over diagrams of defects per node
  double mean = 0;   // defects per diagram
};

struct AggregateError {
  enum class Kind { EmptyCorpus, ZeroNodeDiagram };
  Kind kind;
  std::string message;
};

/// Counts only defects at or above `threshold`.
inline Expected<AggregateValues, AggregateError> aggregate(std::span<const DefectReport> reports, Severity threshold) {
  if (reports.empty()) return unexpected(AggregateError{AggregateError::Kind::EmptyCorpus, "no reports to aggregate"});
  double defects = 0, node_total = 0, ratio_sum = 0;
  for (const auto& r : reports) {
    if (r.node_count == 0)
      return unexpected(AggregateError{AggregateError::Kind::ZeroNodeDiagram,
                                       "diagram \"" + r.graph_id + "\" has no nodes"});
    auto d = static_cast<double>(r.count_at_least(threshold));
    defects += d;
    node_total += static_cast<double>(r.node_count);
    ratio_sum += d / static_cast<double>(r.node_count);
  }
  auto n = static_cast<double>(reports.size());
  return AggregateValues{defects / node_total, ratio_sum / n, defects / n};
}

/// The six-cell grid: low counts all severities, med counts severe and up.
struct DefectAggregate {
  AggregateValues low;
  AggregateValues med;
};

inline Expected<DefectAggregate, AggregateError> aggregate_grid(std::span<const DefectReport> reports) {
  auto low = aggregate(reports, Severity::Minor);
  if (!low) return unexpected(low.error());
  auto med = aggregate(reports, Severity::Severe);
  return DefectAggregate{*low, *med};
}

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const Defect& d) {
  return Json{{"kind", to_string(d.kind)},
              {"severity", to_string(d.severity)},
              {"subjects", d.subjects},
              {"message", d.message}};
}

inline Json to_json(const DefectReport& r) {
  Json defects = Json::array();
  for (const auto& d : r.defects) defects.push_back(to_json(d));
  return Json{{"graph_id", r.graph_id},
              {"node_count", r.node_count},
              {"defects", std::move(defects)},
              {"counts_by_severity",
               {{"minor", r.count(Severity::Minor)},
                {"severe", r.count(Severity::Severe)},
                {"unacceptable", r.count(Severity::Unacceptable)}}}};
}

inline std::optional<DefectReport> defect_report_from_json(const Json& j) {
  try {
    DefectReport r;
    r.graph_id = j.at("graph_id").get<std::string>();
    r.node_count = j.at("node_count").get<std::size_t>();
    for (const auto& d : j.at("defects")) {
      auto kind = defect_kind_from_string(d.at("kind").get<std::string>());
      if (!kind) return std::nullopt;
      r.defects.push_back(Defect{*kind, severity_of(*kind), d.at("subjects").get<std::vector<std::string>>(),
                                 d.at("message").get<std::string>()});
      ++r.counts_by_severity[static_cast<std::size_t>(severity_of(*kind))];
    }
    return r;
  } catch (const Json::exception&) {
    return std::nullopt;
  }
}

inline Json to_json(const AggregateValues& v) { return Json{{"micro", v.micro}, {"macro", v.macro}, {"mean", v.mean}}; }

inline Json to_json(const DefectAggregate& a) {
  return Json{{"macro", {{"low", a.low.macro}, {"med", a.med.macro}}},
              {"micro", {{"low", a.low.micro}, {"med", a.med.micro}}},
              {"mean", {{"low", a.low.mean}, {"med", a.med.mean}}}};
}

}  // namespace q2d
