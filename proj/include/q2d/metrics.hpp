#pragma once

// Relevance metrics over annotated diagrams: confusion counts with max-based
// false negatives, micro/macro precision-recall-F1 (plus hard variants that
// credit only Sufficiency nodes) and Cohen's kappa between annotators.

#include <algorithm>
#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "q2d/graph.hpp"

namespace q2d {

enum class RelevanceLabel { Su = 0, Co = 1, Ha = 2, Ve = 3 };

inline constexpr std::array<RelevanceLabel, 4> kAllLabels = {RelevanceLabel::Su, RelevanceLabel::Co,
                                                              RelevanceLabel::Ha, RelevanceLabel::Ve};

inline std::string_view to_string(RelevanceLabel l) {
  switch (l) {
    case RelevanceLabel::Su: return "Su";
    case RelevanceLabel::Co: return "Co";
    case RelevanceLabel::Ha: return "Ha";
    case RelevanceLabel::Ve: return "Ve";
  }
  return "";
}

inline std::optional<RelevanceLabel> relevance_label_from_string(std::string_view s) {
  if (s == "Su" || s == "Sufficiency") return RelevanceLabel::Su;
  if (s == "Co" || s == "Completeness") return RelevanceLabel::Co;
  if (s == "Ha" || s == "Hallucination") return RelevanceLabel::Ha;
  if (s == "Ve" || s == "Verbosity") return RelevanceLabel::Ve;
  return std::nullopt;
}

struct AnnotatedDiagram {
  std::string query_id;
  std::string model_id;
  std::optional<DetailLevel> level;
  std::map<std::string, RelevanceLabel> labels;  // node_id -> label

  std::array<std::size_t, 4> class_counts() const {
    std::array<std::size_t, 4> c{};
    for (const auto& [_, l] : labels) ++c[static_cast<std::size_t>(l)];
    return c;
  }
};

struct ConfusionCounts {
  std::size_t su = 0, co = 0, ha = 0, ve = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tp_hard = 0, fn_hard = 0;

  static ConfusionCounts from_classes(std::size_t su, std::size_t co, std::size_t ha, std::size_t ve) {
    ConfusionCounts c;
    c.su = su;
    c.co = co;
    c.ha = ha;
    c.ve = ve;
    c.tp = su + co;
    c.fp = ha + ve;
    c.tp_hard = su;
    return c;
  }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    su += o.su, co += o.co, ha += o.ha, ve += o.ve;
    tp += o.tp, fp += o.fp, fn += o.fn, tp_hard += o.tp_hard, fn_hard += o.fn_hard;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

struct MetricsError {
  enum class Kind { EmptyQueryGroup, DuplicateModel, EmptyInput, AllUndefined, LengthMismatch, DegenerateMarginals };
  Kind kind;
  std::string message;
};

inline std::string_view to_string(MetricsError::Kind k) {
  switch (k) {
    case MetricsError::Kind::EmptyQueryGroup: return "EmptyQueryGroup";
    case MetricsError::Kind::DuplicateModel: return "DuplicateModel";
    case MetricsError::Kind::EmptyInput: return "EmptyInput";
    case MetricsError::Kind::AllUndefined: return "AllUndefined";
    case MetricsError::Kind::LengthMismatch: return "LengthMismatch";
    case MetricsError::Kind::DegenerateMarginals: return "DegenerateMarginals";
  }
  return "";
}

/// Per-model counts for one query group. FN is estimated against the best
/// |Su| and best |Co| any model reached for the query, so recall and F1 are
/// upper bounds.
inline Expected<std::map<std::string, ConfusionCounts>, MetricsError> confusion_per_query(
    std::span<const AnnotatedDiagram> group, std::vector<std::string>* warnings = nullptr) {
  if (group.empty()) return unexpected(MetricsError{MetricsError::Kind::EmptyQueryGroup, "query group is empty"});
  std::map<std::string, ConfusionCounts> out;
  std::size_t max_su = 0, max_co = 0;
  for (const auto& d : group) {
    auto c = d.class_counts();
    auto counts = ConfusionCounts::from_classes(c[0], c[1], c[2], c[3]);
    if (!out.emplace(d.model_id, counts).second)
      return unexpected(MetricsError{MetricsError::Kind::DuplicateModel,
                                     "model \"" + d.model_id + "\" annotated twice for query \"" + d.query_id + "\""});
    max_su = std::max(max_su, counts.su);
    max_co = std::max(max_co, counts.co);
  }
  for (auto& [model, c] : out) {
    std::size_t best = max_su + max_co;
    if (best < c.tp && warnings) warnings->push_back("negative FN floored at 0 for model \"" + model + "\"");
    c.fn = best > c.tp ? best - c.tp : 0;
    c.fn_hard = max_su > c.tp_hard ? max_su - c.tp_hard : 0;
  }
  return out;
}

/// A metric value; nullopt marks an undefined ratio (zero denominator).
using MetricValue = std::optional<double>;

struct MetricSet {
  MetricValue precision, recall, f1, precision_hard, recall_hard, f1_hard;

  static constexpr std::array<std::string_view, 6> kNames = {"precision",      "recall",      "f1",
                                                             "precision_hard", "recall_hard", "f1_hard"};
  std::array<MetricValue, 6> values() const { return {precision, recall, f1, precision_hard, recall_hard, f1_hard}; }
  MetricValue& at(std::size_t i) {
    std::array<MetricValue*, 6> refs = {&precision, &recall, &f1, &precision_hard, &recall_hard, &f1_hard};
    return *refs[i];
  }
};

inline MetricValue ratio(double num, double den) {
  if (den == 0) return std::nullopt;
  return num / den;
}

inline MetricSet compute_metrics(const ConfusionCounts& c) {
  auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  auto tph = static_cast<double>(c.tp_hard), fnh = static_cast<double>(c.fn_hard);
  MetricSet m;
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  m.precision_hard = ratio(tph, tph + fp);
  m.recall_hard = ratio(tph, tph + fnh);
  m.f1_hard = ratio(2 * tph, 2 * tph + fp + fnh);
  return m;
}

/// Pools counts over every diagram, then applies the formulas once.
inline Expected<MetricSet, MetricsError> micro_metrics(std::span<const ConfusionCounts> counts) {
  if (counts.empty()) return unexpected(MetricsError{MetricsError::Kind::EmptyInput, "no counts"});
  ConfusionCounts total;
  for (const auto& c : counts) total += c;
  return compute_metrics(total);
}

struct MacroMetrics {
  MetricSet values;
  std::array<std::size_t, 6> excluded{};  // per metric, units whose value was undefined
};

/// Unweighted mean of per-unit metric values. Undefined per-unit values are
/// left out of the mean and counted in `excluded`.
inline Expected<MacroMetrics, MetricsError> macro_metrics(std::span<const ConfusionCounts> per_unit) {
  if (per_unit.empty()) return unexpected(MetricsError{MetricsError::Kind::EmptyInput, "no counts"});
  std::array<double, 6> sum{};
  std::array<std::size_t, 6> used{};
  MacroMetrics out;
  for (const auto& c : per_unit) {
    auto vals = compute_metrics(c).values();
    for (std::size_t i = 0; i < 6; ++i) {
      if (vals[i]) {
        sum[i] += *vals[i];
        ++used[i];
      } else {
        ++out.excluded[i];
      }
    }
  }
  bool any = false;
  for (std::size_t i = 0; i < 6; ++i) {
    if (used[i]) {
      out.values.at(i) = sum[i] / static_cast<double>(used[i]);
      any = true;
    }
  }
  if (!any) return unexpected(MetricsError{MetricsError::Kind::AllUndefined, "every per-unit metric is undefined"});
  return out;
}

// ---------------------------------------------------------------------------
// Agreement

struct AgreementReport {
  double kappa = 0;
  double observed = 0;
  double expected = 0;
  std::array<std::size_t, 4> marginals_a{};
  std::array<std::size_t, 4> marginals_b{};
};

/// Cohen's kappa over the four relevance classes.
inline Expected<AgreementReport, MetricsError> cohens_kappa(std::span<const RelevanceLabel> a,
                                                           std::span<const RelevanceLabel> b) {
  if (a.size() != b.size() || a.empty())
    return unexpected(MetricsError{MetricsError::Kind::LengthMismatch,
                                   "label vectors must have equal non-zero length (" + std::to_string(a.size()) +
                                       " vs " + std::to_string(b.size()) + ")"});
  AgreementReport r;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++r.marginals_a[static_cast<std::size_t>(a[i])];
    ++r.marginals_b[static_cast<std::size_t>(b[i])];
    agree += a[i] == b[i];
  }
  auto n = static_cast<double>(a.size());
  r.observed = static_cast<double>(agree) / n;
  for (std::size_t k = 0; k < 4; ++k)
    r.expected += (static_cast<double>(r.marginals_a[k]) / n) * (static_cast<double>(r.marginals_b[k]) / n);
  if (r.expected >= 1.0)
    return unexpected(MetricsError{MetricsError::Kind::DegenerateMarginals,
                                   "chance agreement is 1; kappa is undefined"});
  r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
  return r;
}

/// Aligns two annotators over the node ids both labeled, per (query, model, level).
inline Expected<AgreementReport, MetricsError> cohens_kappa(std::span<const AnnotatedDiagram> a,
                                                           std::span<const AnnotatedDiagram> b) {
  auto key = [](const AnnotatedDiagram& d) {
    return d.query_id + "\x1f" + d.model_id + "\x1f" + (d.level ? std::string(to_string(*d.level)) : "");
  };
  std::map<std::string, const AnnotatedDiagram*> by_key;
  for (const auto& d : b) by_key[key(d)] = &d;
  std::vector<RelevanceLabel> la, lb;
  for (const auto& d : a) {
    auto it = by_key.find(key(d));
    if (it == by_key.end())
      return unexpected(MetricsError{MetricsError::Kind::LengthMismatch, "diagram " + d.query_id + "/" + d.model_id +
                                                                             " missing from second annotator"});
    if (it->second->labels.size() != d.labels.size())
      return unexpected(MetricsError{MetricsError::Kind::LengthMismatch,
                                     "annotators labeled different node sets for " + d.query_id + "/" + d.model_id});
    for (const auto& [node, label] : d.labels) {
      auto other = it->second->labels.find(node);
      if (other == it->second->labels.end())
        return unexpected(MetricsError{MetricsError::Kind::LengthMismatch, "node \"" + node + "\" labeled only once"});
      la.push_back(label);
      lb.push_back(other->second);
    }
  }
  if (by_key.size() != a.size())
    return unexpected(MetricsError{MetricsError::Kind::LengthMismatch, "annotators cover different diagrams"});
  return cohens_kappa(std::span<const RelevanceLabel>(la), std::span<const RelevanceLabel>(lb));
}

// ---------------------------------------------------------------------------
// Whole-corpus evaluation

struct ModelRelevance {
  std::string model_id;
  std::array<std::size_t, 4> class_totals{};
  MetricSet micro;
  MacroMetrics macro;
  std::size_t diagrams = 0;
};

struct RelevanceReport {
  std::vector<ModelRelevance> models;  // sorted by model id
  std::vector<std::string> warnings;
};

/// Groups diagrams per (query, level), estimates FN inside every group and
/// aggregates per model. Each annotated diagram is one macro unit.
inline Expected<RelevanceReport, MetricsError> evaluate_relevance(std::span<const AnnotatedDiagram> diagrams) {
  if (diagrams.empty()) return unexpected(MetricsError{MetricsError::Kind::EmptyInput, "no annotated diagrams"});
  std::map<std::pair<std::string, std::string>, std::vector<AnnotatedDiagram>> groups;
  for (const auto& d : diagrams)
    groups[{d.query_id, d.level ? std::string(to_string(*d.level)) : ""}].push_back(d);

  RelevanceReport report;
  std::map<std::string, std::vector<ConfusionCounts>> per_model;
  for (const auto& [_, group] : groups) {
    auto counts = confusion_per_query(group, &report.warnings);
    if (!counts) return unexpected(counts.error());
    for (const auto& [model, c] : *counts) per_model[model].push_back(c);
  }
  for (const auto& [model, counts] : per_model) {
    ModelRelevance m;
    m.model_id = model;
    m.diagrams = counts.size();
    for (const auto& c : counts) {
      m.class_totals[0] += c.su;
      m.class_totals[1] += c.co;
      m.class_totals[2] += c.ha;
      m.class_totals[3] += c.ve;
    }
    m.micro = *micro_metrics(counts);
    auto macro = macro_metrics(counts);
    if (!macro) return unexpected(macro.error());
    m.macro = *macro;
    report.models.push_back(std::move(m));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Annotation files and JSON

inline Json metric_json(const MetricValue& v) { return v ? Json(*v) : Json(nullptr); }

inline Json to_json(const MetricSet& m) {
  Json j = Json::object();
  auto vals = m.values();
  for (std::size_t i = 0; i < 6; ++i) j[std::string(MetricSet::kNames[i])] = metric_json(vals[i]);
  return j;
}

inline MetricSet metric_set_from_json(const Json& j) {
  MetricSet m;
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& v = j.at(std::string(MetricSet::kNames[i]));
    if (!v.is_null()) m.at(i) = v.get<double>();
  }
  return m;
}

inline Json to_json(const RelevanceReport& r) {
  Json counts = Json::object(), grid = Json::object(), exclusions = Json::object();
  for (const auto& m : r.models) {
    counts[m.model_id] = Json{{"Su", m.class_totals[0]},
                              {"Co", m.class_totals[1]},
                              {"Ha", m.class_totals[2]},
                              {"Ve", m.class_totals[3]},
                              {"diagrams", m.diagrams}};
    Json cells = Json::object();
    auto micro = m.micro.values();
    auto macro = m.macro.values.values();
    for (std::size_t i = 0; i < 6; ++i)
      cells[std::string(MetricSet::kNames[i])] = Json{{"micro", metric_json(micro[i])}, {"macro", metric_json(macro[i])}};
    grid[m.model_id] = std::move(cells);
    Json ex = Json::object();
    for (std::size_t i = 0; i < 6; ++i) ex[std::string(MetricSet::kNames[i])] = m.macro.excluded[i];
    exclusions[m.model_id] = std::move(ex);
  }
  return Json{{"class_counts", std::move(counts)},
              {"metrics", std::move(grid)},
              {"macro_exclusions", std::move(exclusions)},
              {"warnings", r.warnings}};
}

inline Json to_json(const AgreementReport& r) {
  Json marg = Json::object();
  for (auto l : kAllLabels)
    marg[std::string(to_string(l))] = {r.marginals_a[static_cast<std::size_t>(l)],
                                       r.marginals_b[static_cast<std::size_t>(l)]};
  return Json{{"kappa", r.kappa}, {"observed_agreement", r.observed}, {"chance_agreement", r.expected},
              {"marginals", std::move(marg)}};
}

/// One annotation document: {"query_id", "model_id", "detail_level"?, "labels": {node_id: "Su"|...}}.
/// When the document embeds the annotated "graph", every node must carry a label.
inline Expected<AnnotatedDiagram, std::string> annotation_from_json(const Json& j) {
  try {
    AnnotatedDiagram d;
    d.query_id = j.at("query_id").get<std::string>();
    d.model_id = j.at("model_id").get<std::string>();
    if (auto it = j.find("detail_level"); it != j.end() && !it->is_null()) {
      d.level = detail_level_from_string(it->get<std::string>());
      if (!d.level) return unexpected(std::string("unknown detail_level \"") + it->get<std::string>() + "\"");
    }
    for (const auto& [node, label] : j.at("labels").items()) {
      auto l = relevance_label_from_string(label.get<std::string>());
      if (!l) return unexpected("unknown relevance label \"" + label.get<std::string>() + "\" for node " + node);
      d.labels.emplace(node, *l);
    }
    if (auto it = j.find("graph"); it != j.end()) {
      auto g = graph_from_json(*it);
      if (!g) return unexpected("embedded graph: " + g.error().message);
      std::set<std::string> ids;
      for (const auto& n : g->nodes) {
        if (!d.labels.count(n.node_id)) return unexpected("node \"" + n.node_id + "\" has no relevance label");
        ids.insert(n.node_id);
      }
      if (d.labels.size() != ids.size())
        return unexpected(std::string("labels reference nodes absent from the graph"));
    }
    return d;
  } catch (const Json::exception& e) {
    return unexpected(std::string("malformed annotation: ") + e.what());
  }
}

inline Json to_json(const AnnotatedDiagram& d) {
  Json labels = Json::object();
  for (const auto& [node, l] : d.labels) labels[node] = to_string(l);
  Json j{{"query_id", d.query_id}, {"model_id", d.model_id}};
  if (d.level) j["detail_level"] = to_string(*d.level);
  j["labels"] = std::move(labels);
  return j;
}

/// Loads every *.json file of a directory (sorted by file name).
inline Expected<std::vector<AnnotatedDiagram>, std::string> load_annotations(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  if (ec) return unexpected("cannot read " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());
  std::vector<AnnotatedDiagram> out;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    Json j = Json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) return unexpected(f.string() + ": malformed JSON");
    auto d = annotation_from_json(j);
    if (!d) return unexpected(f.string() + ": " + d.error());
    out.push_back(std::move(*d));
  }
  return out;
}

}  // namespace q2d
