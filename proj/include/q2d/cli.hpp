#pragma once

// The `q2d` command line: validate, lint, render, eval, curate, gen, serve.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "q2d/corpus.hpp"
#include "q2d/graph.hpp"
#include "q2d/lint.hpp"
#include "q2d/llm.hpp"
#include "q2d/metrics.hpp"
#include "q2d/parallel.hpp"
#include "q2d/render.hpp"
#include "q2d/service.hpp"

namespace q2d::cli {

// sysexits-style codes for everything that is not a lint verdict.
inline constexpr int kExitUsage = 64;
inline constexpr int kExitDataError = 65;
inline constexpr int kExitNoInput = 66;
inline constexpr int kExitUnavailable = 69;
inline constexpr int kExitCantCreate = 73;

/// Lint verdict as a process status: 0 clean, 1 minor, 2 severe, 3 unacceptable.
inline int exit_code_for(std::optional<Severity> worst) {
  if (!worst) return 0;
  return static_cast<int>(*worst) + 1;
}

namespace detail {

struct Io {
  std::ostream& out;
  std::ostream& err;
};

inline std::optional<std::string> slurp(const std::string& path) { return corpus::read_file(path); }

inline bool write_text(const std::string& path, const std::string& text) {
  if (auto parent = std::filesystem::path(path).parent_path(); !parent.empty())
    std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  f << text;
  return static_cast<bool>(f);
}

inline std::string dump(const Json& j) { return j.dump(2, ' ', false, Json::error_handler_t::replace); }

inline void print_report_table(std::ostream& os, const DefectReport& r) {
  os << "graph: " << (r.graph_id.empty() ? "-" : r.graph_id) << "  nodes: " << r.node_count << "\n";
  if (r.defects.empty()) {
    os << "no defects\n";
  } else {
    os << std::left << std::setw(14) << "SEVERITY" << std::setw(32) << "KIND" << "DETAIL\n";
    for (const auto& d : r.defects)
      os << std::left << std::setw(14) << to_string(d.severity) << std::setw(32) << to_string(d.kind) << d.message
         << "\n";
  }
  os << "totals: minor " << r.count(Severity::Minor) << ", severe " << r.count(Severity::Severe) << ", unacceptable "
     << r.count(Severity::Unacceptable) << "\n";
}

inline std::string fmt3(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(3) << v;
  return ss.str();
}

inline std::string fmt_metric(const MetricValue& v) { return v ? fmt3(*v) : "undef"; }

inline std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (std::filesystem::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : std::filesystem::directory_iterator(in))
        if (e.is_regular_file() && e.path().extension() == ".json") found.push_back(e.path().string());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  return files;
}

struct GenOptions {
  std::string endpoint = "http://127.0.0.1:8000/v1";
  std::string model = "default";
  std::optional<double> temperature;
  std::optional<double> top_p;
  int max_tokens = 8192;
  int repair_attempts = 2;
  int timeout_s = 120;
  std::string trace_file = "traces/gen.jsonl";

  llm::GenerationConfig config(llm::GenerationConfig base) const {
    base.endpoint = endpoint;
    base.model = model;
    if (temperature) base.temperature = *temperature;
    if (top_p) base.top_p = *top_p;
    base.max_tokens = max_tokens;
    base.repair_attempts = repair_attempts;
    base.timeout = std::chrono::seconds{timeout_s};
    return base;
  }
};

inline void add_gen_options(CLI::App* cmd, GenOptions& o) {
  cmd->add_option("--endpoint", o.endpoint, "Chat-completion base URL, e.g. http://host:8000/v1")->capture_default_str();
  cmd->add_option("--model", o.model, "Model name sent with each request")->capture_default_str();
  cmd->add_option("--temperature", o.temperature, "Sampling temperature (default depends on task)");
  cmd->add_option("--top-p", o.top_p, "Nucleus sampling mass (default depends on task)");
  cmd->add_option("--max-tokens", o.max_tokens)->capture_default_str();
  cmd->add_option("--repair-attempts", o.repair_attempts, "Re-prompts after an unusable answer")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--timeout", o.timeout_s, "Request timeout in seconds")->capture_default_str();
  cmd->add_option("--trace", o.trace_file, "JSONL file receiving raw traces")->capture_default_str();
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(std::stoull(item)));
  return out;
}

inline std::vector<double> parse_ratios(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

}  // namespace detail

/// Runs the command line against the given streams and returns the exit status.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace detail;
  Io io{out, err};

  CLI::App app{"Query-driven code diagrams: generate, validate, render and evaluate"};
  app.set_config("--config", "", "TOML/INI file mirroring the command-line flags");
  app.require_subcommand(1);
  app.fallthrough();
  bool json = false;
  app.add_flag("--json", json, "Machine-readable output");

  int status = 0;

  // validate
  auto* validate = app.add_subcommand("validate", "Check that a file parses as a graph (or a full diagram response)");
  std::string validate_path;
  bool validate_response = false;
  validate->add_option("file", validate_path)->required();
  validate->add_flag("--response", validate_response, "Expect the three-version diagram response");
  validate->callback([&] {
    auto text = slurp(validate_path);
    if (!text) {
      io.err << "cannot read " << validate_path << "\n";
      status = kExitNoInput;
      return;
    }
    Warnings warnings;
    std::optional<ParseError> error;
    if (validate_response) {
      auto r = parse_diagram_response(*text, &warnings);
      if (!r) error = r.error();
    } else {
      auto g = parse_graph(*text, &warnings);
      if (!g) error = g.error();
    }
    if (json) {
      Json j{{"valid", !error}, {"warnings", warnings}};
      if (error) j["error"] = Json{{"kind", to_string(error->kind)}, {"message", error->message}, {"path", error->path}};
      io.out << dump(j) << "\n";
    } else if (error) {
      io.out << to_string(error->kind) << " at " << error->path << ": " << error->message << "\n";
    } else {
      io.out << "valid\n";
      for (const auto& w : warnings) io.out << "warning: " << w << "\n";
    }
    status = error ? exit_code_for(Severity::Unacceptable) : 0;
  });

  // lint
  auto* lint_cmd = app.add_subcommand("lint", "Report structural defects; exit status is the worst severity");
  std::string lint_path, lint_code;
  lint_cmd->add_option("file", lint_path)->required();
  lint_cmd->add_option("--code", lint_code, "Source file enabling the name-in-code check");
  lint_cmd->callback([&] {
    auto text = slurp(lint_path);
    if (!text) {
      io.err << "cannot read " << lint_path << "\n";
      status = kExitNoInput;
      return;
    }
    std::optional<std::string> code;
    if (!lint_code.empty()) {
      code = slurp(lint_code);
      if (!code) {
        io.err << "cannot read " << lint_code << "\n";
        status = kExitNoInput;
        return;
      }
    }
    std::optional<std::string_view> src;
    if (code) src = *code;
    auto report = lint_text(*text, src, lint_path);
    if (json) io.out << dump(to_json(report)) << "\n";
    else print_report_table(io.out, report);
    status = exit_code_for(report.worst());
  });

  // render
  auto* render_cmd = app.add_subcommand("render", "Transpile a graph to PlantUML or Mermaid");
  std::string render_path, render_format = "plantuml", render_out;
  render_cmd->add_option("file", render_path)->required();
  render_cmd->add_option("--format", render_format)->check(CLI::IsMember({"plantuml", "mermaid"}))->capture_default_str();
  render_cmd->add_option("-o,--output", render_out, "Write markup here instead of stdout");
  render_cmd->callback([&] {
    auto text = slurp(render_path);
    if (!text) {
      io.err << "cannot read " << render_path << "\n";
      status = kExitNoInput;
      return;
    }
    auto g = parse_graph(*text);
    if (!g) {
      io.err << to_string(g.error().kind) << ": " << g.error().message << "\n";
      status = exit_code_for(Severity::Unacceptable);
      return;
    }
    if (auto nd = preflight(*g)) {
      io.err << "non-drawable (" << to_string(nd->reason) << "): " << nd->detail << "\n";
      status = exit_code_for(Severity::Unacceptable);
      return;
    }
    auto r = render(*g, *markup_format_from_string(render_format));
    if (!render_out.empty() && !write_text(render_out, r.text)) {
      io.err << "cannot write " << render_out << "\n";
      status = kExitCantCreate;
      return;
    }
    if (json) {
      io.out << dump(Json{{"format", to_string(r.format)}, {"text", r.text}, {"warnings", r.warnings}}) << "\n";
    } else {
      if (render_out.empty()) io.out << r.text;
      for (const auto& w : r.warnings) io.err << "warning: " << w << "\n";
    }
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Corpus-level evaluation");
  eval->require_subcommand(1);

  auto* eval_defects = eval->add_subcommand("defects", "Macro/micro/mean defect rates at low and med thresholds");
  std::vector<std::string> defect_inputs;
  std::string defects_code_dir;
  std::size_t jobs = 1;
  eval_defects->add_option("inputs", defect_inputs, "Graph files or directories of *.json")->required();
  eval_defects->add_option("--code-dir", defects_code_dir,
                           "Directory holding <graph-stem>.<ext> sources for the name-in-code check");
  eval_defects->add_option("-j,--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  eval_defects->callback([&] {
    auto files = expand_inputs(defect_inputs);
    std::vector<std::optional<std::string>> texts(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) texts[i] = slurp(files[i]);
    for (std::size_t i = 0; i < files.size(); ++i)
      if (!texts[i]) {
        io.err << "cannot read " << files[i] << "\n";
        status = kExitNoInput;
        return;
      }
    auto source_for = [&](const std::string& file) -> std::optional<std::string> {
      if (defects_code_dir.empty()) return std::nullopt;
      auto stem = std::filesystem::path(file).stem().string();
      for (const auto& e : std::filesystem::directory_iterator(defects_code_dir))
        if (e.is_regular_file() && e.path().stem() == stem) return slurp(e.path().string());
      return std::nullopt;
    };
    auto reports = parallel_map(files.size(), jobs, [&](std::size_t i) {
      auto src = source_for(files[i]);
      std::optional<std::string_view> view;
      if (src) view = *src;
      return lint_text(*texts[i], view, files[i]);
    });
    auto grid = aggregate_grid(reports);
    if (!grid) {
      io.err << grid.error().message << "\n";
      status = kExitDataError;
      return;
    }
    if (json) {
      Json per = Json::array();
      for (const auto& r : reports) per.push_back(to_json(r));
      io.out << dump(Json{{"aggregate", to_json(*grid)}, {"diagrams", reports.size()}, {"reports", per}}) << "\n";
    } else {
      io.out << std::left << std::setw(10) << "" << std::setw(10) << "Macro" << std::setw(10) << "" << std::setw(10)
             << "Micro" << std::setw(10) << "" << "Mean\n";
      io.out << std::setw(10) << "" << std::setw(10) << "Low" << std::setw(10) << "Med" << std::setw(10) << "Low"
             << std::setw(10) << "Med" << std::setw(10) << "Low" << "Med\n";
      io.out << std::setw(10) << "all" << std::setw(10) << fmt3(grid->low.macro) << std::setw(10)
             << fmt3(grid->med.macro) << std::setw(10) << fmt3(grid->low.micro) << std::setw(10)
             << fmt3(grid->med.micro) << std::setw(10) << fmt3(grid->low.mean) << fmt3(grid->med.mean) << "\n";
      io.out << "diagrams: " << reports.size() << "\n";
    }
  });

  auto* eval_rel = eval->add_subcommand("relevance", "Precision/recall/F1 (and hard variants) from consensus annotations");
  std::string annotations_dir, relevance_out;
  eval_rel->add_option("--annotations", annotations_dir, "Directory of annotation JSON files")->required();
  eval_rel->add_option("--out", relevance_out, "Write the JSON report here");
  eval_rel->callback([&] {
    auto ann = load_annotations(annotations_dir);
    if (!ann) {
      io.err << ann.error() << "\n";
      status = kExitDataError;
      return;
    }
    auto report = evaluate_relevance(*ann);
    if (!report) {
      io.err << to_string(report.error().kind) << ": " << report.error().message << "\n";
      status = kExitDataError;
      return;
    }
    Json j = to_json(*report);
    if (!relevance_out.empty() && !write_text(relevance_out, dump(j) + "\n")) {
      io.err << "cannot write " << relevance_out << "\n";
      status = kExitCantCreate;
      return;
    }
    if (json) {
      io.out << dump(j) << "\n";
      return;
    }
    io.out << std::left << std::setw(24) << "model" << std::setw(6) << "Su" << std::setw(6) << "Co" << std::setw(6)
           << "Ha" << "Ve\n";
    for (const auto& m : report->models)
      io.out << std::setw(24) << m.model_id << std::setw(6) << m.class_totals[0] << std::setw(6) << m.class_totals[1]
             << std::setw(6) << m.class_totals[2] << m.class_totals[3] << "\n";
    io.out << "\n" << std::setw(24) << "metric";
    for (const auto& m : report->models) io.out << std::setw(14) << m.model_id;
    io.out << "\n";
    for (std::size_t i = 0; i < 6; ++i) {
      for (const char* agg : {"micro", "macro"}) {
        io.out << std::setw(24) << (std::string(MetricSet::kNames[i]) + " " + agg);
        for (const auto& m : report->models) {
          auto v = std::string(agg) == "micro" ? m.micro.values()[i] : m.macro.values.values()[i];
          io.out << std::setw(14) << fmt_metric(v);
        }
        io.out << "\n";
      }
    }
  });

  auto* eval_agree = eval->add_subcommand("agreement", "Cohen's kappa between two annotators' label directories");
  std::string agree_a, agree_b;
  eval_agree->add_option("--a", agree_a, "First annotator's directory")->required();
  eval_agree->add_option("--b", agree_b, "Second annotator's directory")->required();
  eval_agree->callback([&] {
    auto a = load_annotations(agree_a);
    auto b = a ? load_annotations(agree_b) : a;
    if (!a || !b) {
      io.err << (!a ? a.error() : b.error()) << "\n";
      status = kExitDataError;
      return;
    }
    auto k = cohens_kappa(std::span<const AnnotatedDiagram>(*a), std::span<const AnnotatedDiagram>(*b));
    if (!k) {
      io.err << to_string(k.error().kind) << ": " << k.error().message << "\n";
      status = kExitDataError;
      return;
    }
    if (json) io.out << dump(to_json(*k)) << "\n";
    else io.out << "kappa " << std::fixed << std::setprecision(4) << k->kappa << "  observed " << k->observed
                << "  chance " << k->expected << "\n";
  });

  // curate
  auto* curate = app.add_subcommand("curate", "Filter, deduplicate and split a code corpus into a manifest");
  std::string curate_input, curate_out, curate_sizes = "88,12,24", curate_ratios;
  corpus::FilterParams filter;
  double jaccard = 0.8;
  std::uint64_t seed = 0;
  bool allow_non_ascii = false;
  std::size_t top_repos = 150;
  std::vector<std::string> licenses = corpus::default_licenses();
  curate->add_option("--input", curate_input, "Directory of <repo>/<files> or a repository metadata JSON")->required();
  curate->add_option("--min-chars", filter.min_chars)->capture_default_str();
  curate->add_option("--max-chars", filter.max_chars)->capture_default_str();
  curate->add_flag("--allow-non-ascii", allow_non_ascii, "Keep files with non-ASCII bytes");
  curate->add_option("--jaccard", jaccard, "Near-duplicate threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  auto* sizes_opt = curate->add_option("--sizes", curate_sizes, "train,val,test file counts")->capture_default_str();
  curate->add_option("--ratios", curate_ratios, "train,val,test ratios over all surviving files")->excludes(sizes_opt);
  curate->add_option("--seed", seed)->capture_default_str();
  curate->add_option("--top-repos", top_repos, "Most-starred repositories kept from metadata")->capture_default_str();
  curate->add_option("--licenses", licenses, "Allowed repository licenses")->capture_default_str();
  curate->add_option("-j,--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  curate->add_option("--out", curate_out, "Manifest path")->required();
  curate->callback([&] {
    if (filter.min_chars > filter.max_chars) {
      io.err << "--min-chars must not exceed --max-chars\n";
      status = kExitUsage;
      return;
    }
    if (jaccard <= 0) {
      io.err << "--jaccard must be in (0, 1]\n";
      status = kExitUsage;
      return;
    }
    filter.ascii_only = !allow_non_ascii;
    std::vector<corpus::FileRecord> records;
    if (std::filesystem::is_directory(curate_input)) {
      records = corpus::ingest_directory(curate_input);
    } else {
      auto r = corpus::ingest_metadata(curate_input, licenses, top_repos);
      if (!r) {
        io.err << r.error() << "\n";
        status = kExitNoInput;
        return;
      }
      records = std::move(*r);
    }
    auto filtered = corpus::filter_files(std::move(records), filter);
    auto deduped = corpus::dedup(std::move(filtered), jaccard, jobs);
    std::vector<std::size_t> sizes;
    try {
      sizes = curate_ratios.empty()
                  ? parse_sizes(curate_sizes)
                  : corpus::sizes_from_ratios(parse_ratios(curate_ratios), deduped.survivors.size());
    } catch (const std::exception&) {
      io.err << "cannot parse split sizes\n";
      status = kExitUsage;
      return;
    }
    auto manifest = corpus::stratified_split(std::move(deduped.survivors), sizes, seed);
    if (!manifest) {
      io.err << manifest.error() << "\n";
      status = kExitDataError;
      return;
    }
    manifest->filter = filter;
    manifest->jaccard_threshold = jaccard;
    manifest->dropped = std::move(deduped.dropped);
    Json j = corpus::to_json(*manifest);
    if (!write_text(curate_out, dump(j) + "\n")) {
      io.err << "cannot write " << curate_out << "\n";
      status = kExitCantCreate;
      return;
    }
    for (const auto& w : manifest->warnings) io.err << "warning: " << w << "\n";
    if (json) {
      io.out << dump(j) << "\n";
    } else {
      for (std::size_t i = 0; i < manifest->split_names.size(); ++i)
        io.out << manifest->split_names[i] << ": " << manifest->count(manifest->split_names[i]) << "\n";
      io.out << "dropped duplicates: " << manifest->dropped.size() << "\n";
    }
  });

  // gen
  auto* gen = app.add_subcommand("gen", "Drive a chat-completion endpoint");
  gen->require_subcommand(1);
  GenOptions gen_opts;

  auto* gen_queries = gen->add_subcommand("queries", "Synthesize up to three user queries for a code file");
  std::string gen_code;
  gen_queries->add_option("--code", gen_code, "Source file")->required();
  add_gen_options(gen_queries, gen_opts);
  gen_queries->callback([&] {
    auto code = slurp(gen_code);
    if (!code || code->empty()) {
      io.err << "cannot read non-empty " << gen_code << "\n";
      status = kExitNoInput;
      return;
    }
    auto cfg = gen_opts.config(llm::GenerationConfig::for_queries());
    llm::HttpChatTransport transport(cfg.endpoint, cfg.timeout);
    auto result = llm::generate_queries(cfg, transport, *code);
    llm::TraceStore(gen_opts.trace_file).append(llm::new_trace_id(), result.trace);
    if (result.status == llm::Status::EndpointError) {
      io.err << result.error << "\n";
      status = kExitUnavailable;
      return;
    }
    if (!result.queries) {
      io.err << result.error << "\n";
      status = exit_code_for(Severity::Unacceptable);
      return;
    }
    if (json) {
      io.out << dump(Json{{"candidates", result.queries->candidates},
                          {"final", result.queries->final},
                          {"warnings", result.queries->warnings},
                          {"attempts", result.trace.attempts.size()}})
             << "\n";
    } else {
      for (const auto& q : result.queries->final) io.out << q << "\n";
    }
  });

  auto* gen_diagram = gen->add_subcommand("diagram", "Generate a diagram answering a query about a code file");
  std::string diagram_query, diagram_level = "medium", diagram_mode = "finetuned", diagram_out, diagram_format;
  gen_diagram->add_option("--code", gen_code, "Source file")->required();
  gen_diagram->add_option("--query", diagram_query, "User question")->required();
  gen_diagram->add_option("--level", diagram_level)
      ->check(CLI::IsMember({"minimal", "medium", "moderate", "full"}))
      ->capture_default_str();
  gen_diagram->add_option("--mode", diagram_mode)->check(CLI::IsMember({"base", "finetuned"}))->capture_default_str();
  gen_diagram->add_option("-o,--out", diagram_out, "Write the graph JSON here");
  gen_diagram->add_option("--format", diagram_format, "Also print markup")->check(CLI::IsMember({"plantuml", "mermaid"}));
  add_gen_options(gen_diagram, gen_opts);
  gen_diagram->callback([&] {
    auto code = slurp(gen_code);
    if (!code || code->empty()) {
      io.err << "cannot read non-empty " << gen_code << "\n";
      status = kExitNoInput;
      return;
    }
    if (diagram_query.empty()) {
      io.err << "--query must not be empty\n";
      status = kExitUsage;
      return;
    }
    auto level = *detail_level_from_string(diagram_level);
    auto mode = *llm::mode_from_string(diagram_mode);
    auto cfg = gen_opts.config(llm::GenerationConfig::for_diagrams());
    llm::HttpChatTransport transport(cfg.endpoint, cfg.timeout);
    auto result = llm::generate_diagram(cfg, transport, *code, diagram_query, mode, level);
    auto trace_id = llm::new_trace_id();
    llm::TraceStore(gen_opts.trace_file).append(trace_id, result.trace);
    if (result.status == llm::Status::EndpointError) {
      io.err << result.error << "\n";
      status = kExitUnavailable;
      return;
    }
    const Graph* g = result.graph(level);
    if (!g) {
      io.err << result.error << "\n";
      status = exit_code_for(Severity::Unacceptable);
      return;
    }
    auto report = lint(*g, *code, std::string(to_string(level)));
    std::string graph_text = serialize_graph(*g, 2) + "\n";
    if (!diagram_out.empty() && !write_text(diagram_out, graph_text)) {
      io.err << "cannot write " << diagram_out << "\n";
      status = kExitCantCreate;
      return;
    }
    std::optional<RenderOutput> markup;
    if (!diagram_format.empty() && !preflight(*g)) markup = render(*g, *markup_format_from_string(diagram_format));
    if (json) {
      Json j{{"graph", graph_to_json(*g)},
             {"defects", to_json(report)},
             {"status", to_string(result.status)},
             {"attempts", result.trace.attempts.size()},
             {"trace_id", trace_id}};
      if (auto answer = result.text_answer()) j["text_answer"] = *answer;
      if (markup) j["markup"] = markup->text;
      io.out << dump(j) << "\n";
    } else {
      if (diagram_out.empty()) io.out << graph_text;
      if (markup) io.out << markup->text;
      print_report_table(io.err, report);
    }
    status = result.status == llm::Status::Ok ? 0 : exit_code_for(Severity::Unacceptable);
  });

  auto* gen_batch = gen->add_subcommand("batch", "Generate diagrams for a JSONL task list with bounded concurrency");
  std::string batch_tasks, batch_out_dir;
  gen_batch->add_option("--tasks", batch_tasks, "JSONL lines of {id, code_file, query, level?, mode?}")->required();
  gen_batch->add_option("--out-dir", batch_out_dir, "Directory receiving <id>.json graphs")->required();
  gen_batch->add_option("-j,--jobs", jobs, "Maximum in-flight requests")->check(CLI::PositiveNumber);
  add_gen_options(gen_batch, gen_opts);
  gen_batch->callback([&] {
    auto text = slurp(batch_tasks);
    if (!text) {
      io.err << "cannot read " << batch_tasks << "\n";
      status = kExitNoInput;
      return;
    }
    std::vector<Json> tasks;
    std::istringstream lines(*text);
    for (std::string line; std::getline(lines, line);) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      Json t = Json::parse(line, nullptr, false);
      if (t.is_discarded() || !t.contains("id") || !t.contains("code_file") || !t.contains("query")) {
        io.err << "malformed task line: " << line << "\n";
        status = kExitDataError;
        return;
      }
      tasks.push_back(std::move(t));
    }
    auto base_dir = std::filesystem::path(batch_tasks).parent_path();
    auto cfg = gen_opts.config(llm::GenerationConfig::for_diagrams());
    llm::HttpChatTransport transport(cfg.endpoint, cfg.timeout);
    llm::TraceStore traces(gen_opts.trace_file);
    auto results = parallel_map(tasks.size(), jobs, [&](std::size_t i) -> Json {
      const Json& t = tasks[i];
      auto id = t["id"].get<std::string>();
      auto code = slurp((base_dir / t["code_file"].get<std::string>()).string());
      auto level = detail_level_from_string(t.value("level", "medium"));
      auto mode = llm::mode_from_string(t.value("mode", "finetuned"));
      if (!code || code->empty() || !level || !mode) return Json{{"id", id}, {"status", "invalid_task"}};
      auto result = llm::generate_diagram(cfg, transport, *code, t["query"].get<std::string>(), *mode, *level);
      auto trace_id = llm::new_trace_id();
      traces.append(trace_id, result.trace);
      Json row{{"id", id}, {"status", to_string(result.status)}, {"trace_id", trace_id}};
      if (const Graph* g = result.graph(*level))
        write_text((std::filesystem::path(batch_out_dir) / (id + ".json")).string(), serialize_graph(*g, 2) + "\n");
      return row;
    });
    bool all_ok = std::all_of(results.begin(), results.end(), [](const Json& r) { return r["status"] == "ok"; });
    if (json) io.out << dump(Json(results)) << "\n";
    else
      for (const auto& r : results) io.out << r["id"].get<std::string>() << " " << r["status"].get<std::string>() << "\n";
    status = all_ok ? 0 : exit_code_for(Severity::Unacceptable);
  });

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP API and static UI");
  int port = 8080;
  std::string host = "127.0.0.1", static_dir, serve_trace = "traces/service.jsonl";
  GenOptions serve_gen;
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--static", static_dir, "Directory of built UI assets");
  serve->add_option("--endpoint", serve_gen.endpoint)->capture_default_str();
  serve->add_option("--model", serve_gen.model)->capture_default_str();
  serve->add_option("--repair-attempts", serve_gen.repair_attempts)->check(CLI::NonNegativeNumber)->capture_default_str();
  serve->add_option("--trace", serve_trace)->capture_default_str();
  serve->callback([&] {
    service::ServiceConfig cfg;
    cfg.generation = serve_gen.config(llm::GenerationConfig::for_diagrams());
    cfg.trace_file = serve_trace;
    if (!static_dir.empty()) cfg.static_dir = static_dir;
    auto transport = std::make_shared<llm::HttpChatTransport>(cfg.generation.endpoint, cfg.generation.timeout);
    service::Service svc(cfg, transport);
    httplib::Server server;
    svc.mount(server);
    io.err << "listening on http://" << host << ":" << port << "\n";
    if (!server.listen(host, port)) {
      io.err << "cannot listen on " << host << ":" << port << "\n";
      status = kExitUnavailable;
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    io.out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    io.err << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    io.err << e.what() << "\n";
    return kExitUsage;
  }
  return status;
}

}  // namespace q2d::cli
