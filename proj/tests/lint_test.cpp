#include <gtest/gtest.h>

#include <random>
#include <set>

#include "q2d/lint.hpp"
#include "support/test_support.hpp"

using namespace q2d;

namespace {

struct Fixture {
  std::set<std::string> expect;
  DefectReport report;
};

Fixture run_fixture(const std::string& file) {
  Json doc = test::read_fixture_json("lint/" + file);
  Fixture f;
  for (const auto& k : doc["expect"]) f.expect.insert(k.get<std::string>());
  std::optional<std::string> code;
  if (doc.contains("code")) code = doc["code"].get<std::string>();
  std::optional<std::string_view> src;
  if (code) src = *code;
  std::string text = doc.contains("text") ? doc["text"].get<std::string>() : doc["graph"].dump();
  f.report = lint_text(text, src, file);
  return f;
}

std::set<std::string> kinds(const DefectReport& r) {
  std::set<std::string> out;
  for (const auto& d : r.defects) out.insert(std::string(to_string(d.kind)));
  return out;
}

std::set<std::pair<DefectKind, std::vector<std::string>>> keyed(const DefectReport& r) {
  std::set<std::pair<DefectKind, std::vector<std::string>>> out;
  for (const auto& d : r.defects) out.emplace(d.kind, d.subjects);
  return out;
}

DefectReport synthetic_report(std::size_t nodes, std::size_t minor, std::size_t severe, std::size_t unacceptable) {
  DefectReport r;
  r.node_count = nodes;
  r.counts_by_severity = {minor, severe, unacceptable};
  return r;
}

}  // namespace

class DefectCatalog : public ::testing::TestWithParam<DefectInfo> {};

TEST_P(DefectCatalog, PositiveFixtureFires) {
  auto info = GetParam();
  auto f = run_fixture(std::string(info.name) + ".pos.json");
  EXPECT_TRUE(f.report.has(info.kind));
  EXPECT_EQ(kinds(f.report), f.expect);
  for (const auto& d : f.report.defects) EXPECT_EQ(d.severity, severity_of(d.kind));
}

TEST_P(DefectCatalog, NegativeFixtureIsClean) {
  auto info = GetParam();
  auto f = run_fixture(std::string(info.name) + ".neg.json");
  EXPECT_FALSE(f.report.has(info.kind));
  EXPECT_EQ(kinds(f.report), f.expect);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, DefectCatalog, ::testing::ValuesIn(kDefectCatalog),
                         [](const auto& info) { return std::string(info.param.name); });

TEST(DefectCatalogShape, TwentySixKindsInSeverityBands) {
  EXPECT_EQ(kDefectCatalog.size(), 26u);
  std::size_t minor = 0, severe = 0, unacceptable = 0;
  for (std::size_t i = 0; i < kDefectCatalog.size(); ++i) {
    EXPECT_EQ(static_cast<std::size_t>(kDefectCatalog[i].kind), i);
    EXPECT_EQ(defect_kind_from_string(kDefectCatalog[i].name), kDefectCatalog[i].kind);
    switch (kDefectCatalog[i].severity) {
      case Severity::Minor: ++minor; break;
      case Severity::Severe: ++severe; break;
      case Severity::Unacceptable: ++unacceptable; break;
    }
  }
  EXPECT_EQ(minor, 15u);
  EXPECT_EQ(severe, 9u);
  EXPECT_EQ(unacceptable, 2u);
}

TEST(Lint, ListenerSampleIsClean) {
  auto code = test::read_fixture("samples/cr_service_worker.ts");
  auto report = lint_text(test::read_fixture("samples/listener_graph.json"), code);
  EXPECT_EQ(report.node_count, 9u);
  EXPECT_TRUE(report.defects.empty()) << to_json(report).dump(2);
}

TEST(Lint, EntitiesSkipNameCheck) {
  Graph g;
  g.nodes = {test::cls("A"), test::cls("User")};
  g.nodes[1].type = NodeKind::Entity;
  g.edges = {test::edge("A", "User")};
  EXPECT_FALSE(lint(g, std::string_view("class A {}")).has(DefectKind::NameNotFoundInCode));
  g.nodes[1].type = NodeKind::Class;
  EXPECT_TRUE(lint(g, std::string_view("class A {}")).has(DefectKind::NameNotFoundInCode));
  EXPECT_FALSE(lint(g).has(DefectKind::NameNotFoundInCode));
}

TEST(Lint, NameCheckIsCaseSensitive) {
  Graph g;
  g.nodes = {test::cls("A", "Parser"), test::cls("B", "Lexer")};
  g.edges = {test::edge("A", "B")};
  EXPECT_TRUE(lint(g, std::string_view("class parser {} class Lexer {}")).has(DefectKind::NameNotFoundInCode));
}

TEST(Lint, EmptyGraphHasNoDefects) {
  auto r = lint(Graph{});
  EXPECT_TRUE(r.defects.empty());
  EXPECT_EQ(r.worst(), std::nullopt);
}

TEST(Lint, BrokenTextReportsZeroNodes) {
  auto r = lint_text("not json");
  ASSERT_EQ(r.defects.size(), 1u);
  EXPECT_EQ(r.defects[0].kind, DefectKind::BrokenJson);
  EXPECT_EQ(r.node_count, 0u);
  EXPECT_EQ(r.worst(), Severity::Unacceptable);
}

TEST(Lint, DeterministicBytes) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    Graph g = test::random_graph(rng);
    auto a = to_json(lint(g, std::string_view("abc XYZ"))).dump();
    auto b = to_json(lint(g, std::string_view("abc XYZ"))).dump();
    ASSERT_EQ(a, b);
  }
}

TEST(Lint, DefectOrderIsCanonical) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    auto r = lint(test::random_graph(rng));
    for (std::size_t k = 1; k < r.defects.size(); ++k) {
      const auto& a = r.defects[k - 1];
      const auto& b = r.defects[k];
      ASSERT_TRUE(a.kind < b.kind || (a.kind == b.kind && a.subjects < b.subjects));
    }
  }
}

TEST(Lint, DuplicatingAnEdgeNeverRemovesDefects) {
  std::mt19937_64 rng(17);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    Graph g = test::random_graph(rng);
    if (g.edges.empty()) continue;
    auto before = keyed(lint(g));
    g.edges.push_back(g.edges[std::uniform_int_distribution<std::size_t>(0, g.edges.size() - 1)(rng)]);
    auto after = lint(g);
    EXPECT_TRUE(after.has(DefectKind::RepeatedEdges));
    auto after_keys = keyed(after);
    for (const auto& k : before) ASSERT_TRUE(after_keys.count(k)) << to_string(k.first);
    ++checked;
  }
  EXPECT_GT(checked, 300);
}

TEST(Lint, NonDrawableIffPreflightFails) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 1000; ++i) {
    Graph g = test::random_graph(rng);
    ASSERT_EQ(lint(g).has(DefectKind::NonDrawable), preflight(g).has_value());
  }
}

TEST(Lint, ReportJsonRoundTrip) {
  auto r = run_fixture("package_recursion.pos.json").report;
  auto back = defect_report_from_json(to_json(r));
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, r);
}

TEST(Aggregate, HandArithmeticExample) {
  std::vector<DefectReport> reports = {synthetic_report(4, 2, 0, 0), synthetic_report(1, 0, 0, 0)};
  auto v = aggregate(reports, Severity::Minor);
  ASSERT_TRUE(v);
  EXPECT_DOUBLE_EQ(v->micro, 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(v->macro, (2.0 / 4.0 + 0.0 / 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(v->mean, 2.0 / 2.0);
}

TEST(Aggregate, ThresholdSelectsSeverities) {
  std::vector<DefectReport> reports = {synthetic_report(10, 3, 2, 1)};
  EXPECT_DOUBLE_EQ(aggregate(reports, Severity::Minor)->mean, 6.0);
  EXPECT_DOUBLE_EQ(aggregate(reports, Severity::Severe)->mean, 3.0);
  EXPECT_DOUBLE_EQ(aggregate(reports, Severity::Unacceptable)->mean, 1.0);
}

TEST(Aggregate, CleanCorpusIsZero) {
  std::vector<DefectReport> reports = {synthetic_report(3, 0, 0, 0), synthetic_report(5, 0, 0, 0)};
  auto grid = aggregate_grid(reports);
  ASSERT_TRUE(grid);
  for (const auto& v : {grid->low, grid->med}) {
    EXPECT_EQ(v.micro, 0.0);
    EXPECT_EQ(v.macro, 0.0);
    EXPECT_EQ(v.mean, 0.0);
  }
}

TEST(Aggregate, SingleReportIdentities) {
  std::vector<DefectReport> reports = {synthetic_report(7, 2, 1, 0)};
  auto v = aggregate(reports, Severity::Minor);
  ASSERT_TRUE(v);
  EXPECT_DOUBLE_EQ(v->micro, v->macro);
  EXPECT_DOUBLE_EQ(v->mean, 3.0);
}

TEST(Aggregate, Errors) {
  std::vector<DefectReport> none;
  EXPECT_EQ(aggregate(none, Severity::Minor).error().kind, AggregateError::Kind::EmptyCorpus);
  std::vector<DefectReport> zero = {synthetic_report(0, 1, 0, 0)};
  EXPECT_EQ(aggregate(zero, Severity::Minor).error().kind, AggregateError::Kind::ZeroNodeDiagram);
}

TEST(Aggregate, MedNeverExceedsLow) {
  std::mt19937_64 rng(29);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  for (int set = 0; set < 100; ++set) {
    std::vector<DefectReport> reports;
    std::size_t n = pick(1, 20);
    for (std::size_t i = 0; i < n; ++i) {
      Graph g = test::random_graph(rng);
      g.nodes.push_back(test::cls("anchor"));
      reports.push_back(lint(g));
    }
    auto grid = aggregate_grid(reports);
    ASSERT_TRUE(grid);
    EXPECT_LE(grid->med.micro, grid->low.micro);
    EXPECT_LE(grid->med.macro, grid->low.macro);
    EXPECT_LE(grid->med.mean, grid->low.mean);
  }
}
