#pragma once

// PlantUML and Mermaid emitters for the graph IR, plus the drawability
// preflight shared with the linter.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "q2d/graph.hpp"

namespace q2d {

enum class MarkupFormat { PlantUml, Mermaid };

inline std::string_view to_string(MarkupFormat f) { return f == MarkupFormat::PlantUml ? "plantuml" : "mermaid"; }

inline std::optional<MarkupFormat> markup_format_from_string(std::string_view s) {
  if (s == "plantuml" || s == "puml") return MarkupFormat::PlantUml;
  if (s == "mermaid" || s == "mmd") return MarkupFormat::Mermaid;
  return std::nullopt;
}

struct RenderOutput {
  MarkupFormat format = MarkupFormat::PlantUml;
  std::string text;
  std::vector<std::string> warnings;
};

struct NonDrawable {
  enum class Reason { UnresolvedPackageChild, PackageRecursion, MemberWithoutClass, EdgeTargetsPackage };
  Reason reason;
  std::string detail;
};

inline std::string_view to_string(NonDrawable::Reason r) {
  switch (r) {
    case NonDrawable::Reason::UnresolvedPackageChild: return "unresolved_package_child";
    case NonDrawable::Reason::PackageRecursion: return "package_recursion";
    case NonDrawable::Reason::MemberWithoutClass: return "member_without_class";
    case NonDrawable::Reason::EdgeTargetsPackage: return "edge_targets_package";
  }
  return "";
}

/// Package ids that lie on a nesting cycle, grouped by strongly connected
/// component. Each group is sorted; groups are ordered by their first id.
inline std::vector<std::vector<std::string>> package_cycles(const Graph& g) {
  std::map<std::string, std::set<std::string>> nested;
  for (const auto& p : g.packages) {
    auto& out = nested[p.package_id];
    for (const auto& c : p.children)
      if (g.find_package(c)) out.insert(c);
  }
  auto reachable_from = [&](const std::string& start) {
    std::set<std::string> seen;
    std::vector<std::string> stack(nested[start].begin(), nested[start].end());
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      if (!seen.insert(cur).second) continue;
      for (const auto& nxt : nested[cur]) stack.push_back(nxt);
    }
    return seen;
  };
  std::map<std::string, std::set<std::string>> reach;
  for (const auto& [id, _] : nested) reach[id] = reachable_from(id);

  std::vector<std::vector<std::string>> groups;
  std::set<std::string> assigned;
  for (const auto& [id, r] : reach) {
    if (!r.count(id) || assigned.count(id)) continue;
    std::vector<std::string> group;
    for (const auto& other : r)
      if (reach[other].count(id)) group.push_back(other);
    for (const auto& m : group) assigned.insert(m);
    groups.push_back(std::move(group));
  }
  return groups;
}

/// Checks that a graph can be drawn at all. Returns the first failing
/// condition, or nullopt when the graph is drawable.
inline std::optional<NonDrawable> preflight(const Graph& g) {
  for (const auto& p : g.packages) {
    for (const auto& c : p.children) {
      if (!g.find_node(c) && !g.find_package(c))
        return NonDrawable{NonDrawable::Reason::UnresolvedPackageChild,
                           "package \"" + p.package_id + "\" lists unknown child \"" + c + "\""};
    }
  }
  if (auto cycles = package_cycles(g); !cycles.empty()) {
    std::string ids;
    for (const auto& id : cycles.front()) ids += (ids.empty() ? "" : ", ") + id;
    return NonDrawable{NonDrawable::Reason::PackageRecursion, "packages nest recursively: " + ids};
  }
  for (const auto& n : g.nodes) {
    if (!n.is_member() || !n.source_class_id) continue;
    const Node* owner = g.find_node(*n.source_class_id);
    if (!owner || owner->type != NodeKind::Class)
      return NonDrawable{NonDrawable::Reason::MemberWithoutClass,
                         std::string(to_string(n.type)) + " \"" + n.node_id + "\" names \"" + *n.source_class_id +
                             "\" as its class, which is not a class node"};
  }
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    for (const auto* end : {&g.edges[i].node_id_from, &g.edges[i].node_id_to}) {
      if (!g.find_node(*end) && g.find_package(*end))
        return NonDrawable{NonDrawable::Reason::EdgeTargetsPackage,
                           "edges[" + std::to_string(i) + "] references package \"" + *end + "\""};
    }
  }
  return std::nullopt;
}

namespace detail {

inline constexpr std::size_t kNoteLimit = 120;

/// Collapses whitespace runs to one space and caps the length for notes.
inline std::string one_line(std::string_view text, std::size_t limit = kNoteLimit) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c == '"' ? '\'' : c;
  }
  if (out.size() > limit) {
    std::size_t cut = limit;
    while (cut > 0 && (static_cast<unsigned char>(out[cut]) & 0xC0) == 0x80) --cut;
    out = out.substr(0, cut) + "...";
  }
  return out;
}

inline std::string sanitize_identifier(std::string_view raw) {
  std::string out;
  for (char c : raw) {
    bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    out += ok ? c : '_';
  }
  return out.empty() ? "_" : out;
}

// Hands out collision-free markup identifiers.
class IdAllocator {
 public:
  std::string allocate(const std::string& raw, std::string_view what, std::vector<std::string>& warnings) {
    std::string base = sanitize_identifier(raw);
    std::string candidate = base;
    for (int n = 2; used_.count(candidate); ++n) candidate = base + "_" + std::to_string(n);
    used_.insert(candidate);
    if (candidate != raw)
      warnings.push_back(std::string(what) + " id \"" + raw + "\" emitted as \"" + candidate + "\"");
    return candidate;
  }

 private:
  std::unordered_set<std::string> used_;
};

inline std::string_view visibility_symbol(Visibility v) {
  switch (v) {
    case Visibility::Public: return "+";
    case Visibility::Private: return "-";
    case Visibility::Protected: return "#";
    case Visibility::PackagePrivate: return "~";
  }
  return "+";
}

// Shared layout decisions for both emitters.
struct Layout {
  std::vector<std::string> node_alias;                  // per node index
  std::vector<std::string> package_alias;               // per package index
  std::unordered_map<std::string, std::size_t> node_by_id;     // first node with the id
  std::unordered_map<std::string, std::size_t> package_by_id;  // first package with the id
  std::vector<std::optional<std::size_t>> owner;        // member -> class node index
  std::vector<std::vector<std::size_t>> members;        // class node index -> members
  std::vector<std::optional<std::size_t>> node_parent;  // placing package index
  std::vector<std::optional<std::size_t>> package_parent;
  std::vector<std::vector<std::size_t>> package_nodes;     // placed nodes, child order
  std::vector<std::vector<std::size_t>> package_children;  // nested packages, child order
  std::vector<std::string> warnings;

  bool placed_in_class(std::size_t i) const { return owner[i].has_value(); }
};

inline Layout make_layout(const Graph& g) {
  Layout l;
  const auto nn = g.nodes.size();
  const auto np = g.packages.size();
  IdAllocator ids;
  for (std::size_t i = 0; i < nn; ++i) {
    l.node_by_id.emplace(g.nodes[i].node_id, i);
    l.node_alias.push_back(ids.allocate(g.nodes[i].node_id, "node", l.warnings));
  }
  for (std::size_t i = 0; i < np; ++i) {
    l.package_by_id.emplace(g.packages[i].package_id, i);
    l.package_alias.push_back(ids.allocate(g.packages[i].package_id, "package", l.warnings));
  }
  l.owner.assign(nn, std::nullopt);
  l.members.assign(nn, {});
  for (std::size_t i = 0; i < nn; ++i) {
    const auto& n = g.nodes[i];
    if (!n.is_member() || !n.source_class_id) continue;
    auto it = l.node_by_id.find(*n.source_class_id);
    if (it != l.node_by_id.end() && g.nodes[it->second].type == NodeKind::Class && it->second != i) {
      l.owner[i] = it->second;
      l.members[it->second].push_back(i);
    }
  }
  l.node_parent.assign(nn, std::nullopt);
  l.package_parent.assign(np, std::nullopt);
  l.package_nodes.assign(np, {});
  l.package_children.assign(np, {});
  for (std::size_t p = 0; p < np; ++p) {
    for (const auto& c : g.packages[p].children) {
      if (auto it = l.node_by_id.find(c); it != l.node_by_id.end()) {
        auto i = it->second;
        if (l.placed_in_class(i)) continue;
        if (l.node_parent[i]) {
          if (*l.node_parent[i] != p)
            l.warnings.push_back("node \"" + c + "\" listed in several packages; drawn in \"" +
                                 g.packages[*l.node_parent[i]].package_id + "\"");
          continue;
        }
        l.node_parent[i] = p;
        l.package_nodes[p].push_back(i);
      } else if (auto pt = l.package_by_id.find(c); pt != l.package_by_id.end()) {
        auto q = pt->second;
        if (q == p) continue;
        if (l.package_parent[q]) {
          if (*l.package_parent[q] != p)
            l.warnings.push_back("package \"" + c + "\" nested in several packages; drawn in \"" +
                                 g.packages[*l.package_parent[q]].package_id + "\"");
          continue;
        }
        l.package_parent[q] = p;
        l.package_children[p].push_back(q);
      }
    }
  }
  return l;
}

inline std::string plantuml_member(const Node& n) {
  std::string line = std::string(visibility_symbol(n.visibility)) + " " + n.name;
  if (n.type == NodeKind::Method) {
    line += "(" + n.params.value_or("") + ")";
    if (n.return_type) line += ": " + *n.return_type;
  } else if (n.return_type) {
    line += ": " + *n.return_type;
  }
  return one_line(line, std::string::npos);
}

inline std::string free_label(const Node& n) {
  std::string label = n.name;
  if (n.type == NodeKind::Function || n.type == NodeKind::Method) {
    label += "(" + n.params.value_or("") + ")";
    if (n.return_type) label += ": " + *n.return_type;
  } else if ((n.type == NodeKind::Variable || n.type == NodeKind::Field) && n.return_type) {
    label += ": " + *n.return_type;
  }
  return one_line(label, std::string::npos);
}

// Mermaid spells generic brackets as tildes: List~int~.
inline std::string mermaid_generics(std::string s) {
  std::replace(s.begin(), s.end(), '<', '~');
  std::replace(s.begin(), s.end(), '>', '~');
  return s;
}

inline std::string indent(int depth) { return std::string(static_cast<std::size_t>(depth) * 2, ' '); }

// Returns an edge endpoint as markup, or nullopt when it resolves to nothing.
inline std::optional<std::string> plantuml_endpoint(const Graph& g, const Layout& l, const std::string& id) {
  auto it = l.node_by_id.find(id);
  if (it == l.node_by_id.end()) return std::nullopt;
  auto i = it->second;
  if (l.owner[i]) return l.node_alias[*l.owner[i]] + "::" + g.nodes[i].name;
  return l.node_alias[i];
}

}  // namespace detail

/// Emits PlantUML class-diagram markup. Classes carry their methods and
/// fields as nested members; packages become nested `package` blocks; every
/// edge is a plain `-->` association; descriptions are attached notes.
inline RenderOutput to_plantuml(const Graph& g) {
  using namespace detail;
  Layout l = make_layout(g);
  RenderOutput out{MarkupFormat::PlantUml, {}, l.warnings};
  std::string& s = out.text;
  s += "@startuml\n";

  auto emit_node = [&](std::size_t i, int depth) {
    const Node& n = g.nodes[i];
    const std::string& alias = l.node_alias[i];
    std::string label = one_line(n.type == NodeKind::Class || n.type == NodeKind::Entity ? n.name : free_label(n),
                                 std::string::npos);
    std::string head;
    switch (n.type) {
      case NodeKind::Class: head = "class \"" + label + "\" as " + alias; break;
      case NodeKind::Entity: head = "entity \"" + label + "\" as " + alias; break;
      default: head = "class \"" + label + "\" as " + alias + " <<" + std::string(to_string(n.type)) + ">>"; break;
    }
    if (n.type == NodeKind::Class && !l.members[i].empty()) {
      s += indent(depth) + head + " {\n";
      for (auto m : l.members[i]) s += indent(depth + 1) + plantuml_member(g.nodes[m]) + "\n";
      s += indent(depth) + "}\n";
    } else {
      s += indent(depth) + head + "\n";
    }
  };

  std::function<void(std::size_t, int)> emit_package = [&](std::size_t p, int depth) {
    s += indent(depth) + "package \"" + one_line(g.packages[p].package_id, std::string::npos) + "\" as " +
         l.package_alias[p] + " {\n";
    for (auto i : l.package_nodes[p]) emit_node(i, depth + 1);
    for (auto q : l.package_children[p]) emit_package(q, depth + 1);
    s += indent(depth) + "}\n";
  };

  for (std::size_t p = 0; p < g.packages.size(); ++p)
    if (!l.package_parent[p]) emit_package(p, 0);
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (!l.node_parent[i] && !l.placed_in_class(i)) emit_node(i, 0);

  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& edge = g.edges[e];
    auto from = plantuml_endpoint(g, l, edge.node_id_from);
    auto to = plantuml_endpoint(g, l, edge.node_id_to);
    if (!from || !to) {
      out.warnings.push_back("edges[" + std::to_string(e) + "] skipped: endpoint does not name a node");
      continue;
    }
    s += *from + " --> " + *to;
    if (edge.description) s += " : " + one_line(*edge.description);
    s += "\n";
  }

  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& n = g.nodes[i];
    if (n.description.empty()) continue;
    std::string target = l.owner[i] ? l.node_alias[*l.owner[i]] + "::" + n.name : l.node_alias[i];
    s += "note right of " + target + " : " + one_line(n.description) + "\n";
  }
  s += "@enduml\n";
  return out;
}

/// Emits a Mermaid `classDiagram`. Packages map to namespaces; nested
/// packages are flattened to dot-joined namespace names since Mermaid has no
/// nested namespaces. Edges touching a member attach to its owning class.
inline RenderOutput to_mermaid(const Graph& g) {
  using namespace detail;
  Layout l = make_layout(g);
  RenderOutput out{MarkupFormat::Mermaid, {}, l.warnings};
  std::string& s = out.text;
  s += "classDiagram\n";

  auto mermaid_member = [&](const Node& n) {
    std::string line(visibility_symbol(n.visibility));
    if (n.type == NodeKind::Method) {
      line += n.name + "(" + n.params.value_or("") + ")";
      if (n.return_type) line += " " + *n.return_type;
    } else {
      if (n.return_type) line += *n.return_type + " ";
      line += n.name;
    }
    return mermaid_generics(one_line(line, std::string::npos));
  };

  auto emit_node = [&](std::size_t i, int depth) {
    const Node& n = g.nodes[i];
    std::string label = one_line(n.type == NodeKind::Class || n.type == NodeKind::Entity ? n.name : free_label(n),
                                 std::string::npos);
    s += indent(depth) + "class " + l.node_alias[i] + "[\"" + mermaid_generics(label) + "\"]";
    bool has_body = n.type != NodeKind::Class || !l.members[i].empty();
    if (!has_body) {
      s += "\n";
      return;
    }
    s += " {\n";
    if (n.type != NodeKind::Class) s += indent(depth + 1) + "<<" + std::string(to_string(n.type)) + ">>\n";
    for (auto m : l.members[i]) s += indent(depth + 1) + mermaid_member(g.nodes[m]) + "\n";
    s += indent(depth) + "}\n";
  };

  std::vector<std::string> ns_name(g.packages.size());
  std::function<void(std::size_t, const std::string&)> emit_namespace = [&](std::size_t p, const std::string& prefix) {
    ns_name[p] = prefix.empty() ? l.package_alias[p] : prefix + "." + l.package_alias[p];
    if (!prefix.empty())
      out.warnings.push_back("nested package \"" + g.packages[p].package_id + "\" flattened to namespace \"" +
                             ns_name[p] + "\"");
    if (l.package_nodes[p].empty()) {
      out.warnings.push_back("namespace \"" + ns_name[p] + "\" has no classes of its own and is omitted");
    } else {
      s += "  namespace " + ns_name[p] + " {\n";
      for (auto i : l.package_nodes[p]) emit_node(i, 2);
      s += "  }\n";
    }
    for (auto q : l.package_children[p]) emit_namespace(q, ns_name[p]);
  };

  for (std::size_t p = 0; p < g.packages.size(); ++p)
    if (!l.package_parent[p]) emit_namespace(p, "");
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (!l.node_parent[i] && !l.placed_in_class(i)) emit_node(i, 1);

  auto endpoint = [&](const std::string& id, std::size_t e) -> std::optional<std::string> {
    auto it = l.node_by_id.find(id);
    if (it == l.node_by_id.end()) return std::nullopt;
    auto i = it->second;
    if (l.owner[i]) {
      out.warnings.push_back("edges[" + std::to_string(e) + "] endpoint \"" + id + "\" drawn at its class \"" +
                             g.nodes[*l.owner[i]].node_id + "\"");
      return l.node_alias[*l.owner[i]];
    }
    return l.node_alias[i];
  };
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& edge = g.edges[e];
    auto from = endpoint(edge.node_id_from, e);
    auto to = endpoint(edge.node_id_to, e);
    if (!from || !to) {
      out.warnings.push_back("edges[" + std::to_string(e) + "] skipped: endpoint does not name a node");
      continue;
    }
    s += "  " + *from + " --> " + *to;
    if (edge.description) s += " : " + one_line(*edge.description);
    s += "\n";
  }

  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& n = g.nodes[i];
    if (n.description.empty()) continue;
    if (l.owner[i])
      s += "  note for " + l.node_alias[*l.owner[i]] + " \"" + one_line(n.name + ": " + n.description) + "\"\n";
    else
      s += "  note for " + l.node_alias[i] + " \"" + one_line(n.description) + "\"\n";
  }
  return out;
}

inline RenderOutput render(const Graph& g, MarkupFormat format) {
  return format == MarkupFormat::PlantUml ? to_plantuml(g) : to_mermaid(g);
}

}  // namespace q2d
