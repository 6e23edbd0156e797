#include <gtest/gtest.h>

#include <random>

#include "q2d/llm.hpp"
#include "support/mock_endpoint.hpp"
#include "support/test_support.hpp"

using namespace q2d;
using namespace q2d::llm;
using q2d::test::read_fixture;
using q2d::test::read_fixture_json;
using q2d::test::ScriptedTransport;

namespace {

std::string code() { return read_fixture("samples/cr_service_worker.ts"); }
std::string good_graph() { return read_fixture("samples/listener_graph.json"); }
std::string non_drawable_graph() { return read_fixture_json("lint/package_recursion.pos.json")["graph"].dump(); }

const std::string kQuery = "How are messages dispatched?";

std::string base_reply(const std::string& graph) {
  return "```json\n{\"minimal_version\": " + graph + ", \"medium_version\": " + graph + ", \"full_version\": " + graph +
         ", \"text_answer\": \"Messages go through onMessage.\"}\n```";
}

GenerationConfig config(int repairs) {
  auto c = GenerationConfig::for_diagrams();
  c.repair_attempts = repairs;
  return c;
}

DiagramResult run(const std::vector<std::string>& script, int repairs = 2, Mode mode = Mode::Finetuned) {
  ScriptedTransport t(script);
  return generate_diagram(config(repairs), t, code(), kQuery, mode, DetailLevel::Medium);
}

}  // namespace

TEST(RepairLoop, ValidFirstReply) {
  auto r = run({good_graph()});
  EXPECT_EQ(r.status, Status::Ok);
  EXPECT_EQ(r.trace.attempts.size(), 1u);
  ASSERT_NE(r.graph(DetailLevel::Medium), nullptr);
  EXPECT_EQ(r.graph(DetailLevel::Medium)->nodes.size(), 9u);
  EXPECT_EQ(r.trace.status, "ok");
}

TEST(RepairLoop, BrokenThenValid) {
  auto r = run({"{\"nodes\": [", good_graph()});
  EXPECT_EQ(r.status, Status::Ok);
  ASSERT_EQ(r.trace.attempts.size(), 2u);
  EXPECT_TRUE(r.trace.attempts[0].error);
  EXPECT_FALSE(r.trace.attempts[1].error);
}

TEST(RepairLoop, AlwaysBrokenExhausts) {
  auto r = run({"no json at all"}, 2);
  EXPECT_EQ(r.status, Status::ExhaustedRepairs);
  EXPECT_EQ(r.trace.attempts.size(), 3u);
  EXPECT_FALSE(r.payload);
  EXPECT_EQ(r.trace.status, "exhausted_repairs");
}

TEST(RepairLoop, NonDrawableIsRepaired) {
  auto r = run({non_drawable_graph(), good_graph()});
  EXPECT_EQ(r.status, Status::Ok);
  EXPECT_EQ(r.trace.attempts.size(), 2u);
}

TEST(RepairLoop, ExhaustedKeepsLeastBadPayload) {
  auto r = run({"{", non_drawable_graph(), "{"}, 2);
  EXPECT_EQ(r.status, Status::ExhaustedRepairs);
  ASSERT_NE(r.graph(DetailLevel::Medium), nullptr);
  EXPECT_EQ(r.graph(DetailLevel::Medium)->packages.size(), 2u);
}

TEST(RepairLoop, RepairMessageListsDefects) {
  ScriptedTransport t({non_drawable_graph(), good_graph()});
  auto r = generate_diagram(config(2), t, code(), kQuery, Mode::Finetuned, DetailLevel::Full);
  ASSERT_EQ(r.status, Status::Ok);
  auto reqs = t.requests();
  ASSERT_EQ(reqs.size(), 2u);
  ASSERT_EQ(reqs[0].messages.size(), 1u);
  EXPECT_EQ(reqs[0].messages[0].content, prompts::build_finetuned_prompt(code(), kQuery, DetailLevel::Full));
  ASSERT_EQ(reqs[1].messages.size(), 3u);
  EXPECT_EQ(reqs[1].messages[1].role, "assistant");
  EXPECT_EQ(reqs[1].messages[1].content, non_drawable_graph());
  EXPECT_NE(reqs[1].messages[2].content.find("non_drawable"), std::string::npos);
  EXPECT_EQ(reqs[1].temperature, 0.0);
}

TEST(RepairLoop, BoundedOnAdversarialTranscripts) {
  std::mt19937_64 rng(77);
  const std::vector<std::string> junk = {"", "{", "}", "[]", "null", "{\"nodes\": 1}", "```json\n{\n```",
                                         non_drawable_graph(), "<candidates>", "\xFF\xFE", std::string(5000, '{')};
  for (int trial = 0; trial < 300; ++trial) {
    int repairs = static_cast<int>(rng() % 5);
    std::vector<std::string> script;
    std::size_t len = 1 + rng() % 8;
    for (std::size_t i = 0; i < len; ++i) script.push_back(junk[rng() % junk.size()]);
    auto mode = rng() % 2 ? Mode::Base : Mode::Finetuned;
    ScriptedTransport t(script);
    auto r = generate_diagram(config(repairs), t, code(), kQuery, mode, DetailLevel::Minimal);
    ASSERT_EQ(r.status, Status::ExhaustedRepairs);
    ASSERT_EQ(r.trace.attempts.size(), static_cast<std::size_t>(repairs + 1));
    ASSERT_EQ(t.requests().size(), static_cast<std::size_t>(repairs + 1));
  }
}

TEST(RepairLoop, ZeroRepairsMeansOneAttempt) {
  auto r = run({"{", good_graph()}, 0);
  EXPECT_EQ(r.status, Status::ExhaustedRepairs);
  EXPECT_EQ(r.trace.attempts.size(), 1u);
}

TEST(RepairLoop, EndpointErrorStopsImmediately) {
  q2d::test::DownTransport t;
  auto r = generate_diagram(config(2), t, code(), kQuery, Mode::Finetuned, DetailLevel::Medium);
  EXPECT_EQ(r.status, Status::EndpointError);
  EXPECT_EQ(r.trace.attempts.size(), 1u);
  EXPECT_FALSE(r.error.empty());
}

TEST(RepairLoop, InvalidConfigRejected) {
  ScriptedTransport t({good_graph()});
  auto c = config(-1);
  EXPECT_THROW(generate_diagram(c, t, code(), kQuery, Mode::Finetuned, DetailLevel::Medium), std::invalid_argument);
}

TEST(BaseMode, ThreeVersionsLinted) {
  auto r = run({base_reply(good_graph())}, 2, Mode::Base);
  ASSERT_EQ(r.status, Status::Ok);
  ASSERT_EQ(r.trace.attempts.size(), 1u);
  EXPECT_EQ(r.trace.attempts[0].reports.size(), 3u);
  EXPECT_EQ(r.text_answer(), "Messages go through onMessage.");
  ASSERT_NE(r.graph(DetailLevel::Full), nullptr);
}

TEST(BaseMode, MissingVersionTriggersRepair) {
  auto partial = "{\"minimal_version\": " + good_graph() + ", \"text_answer\": \"\"}";
  auto r = run({partial, base_reply(good_graph())}, 2, Mode::Base);
  EXPECT_EQ(r.status, Status::Ok);
  EXPECT_EQ(r.trace.attempts.size(), 2u);
}

TEST(Queries, ParsedWithSamplingConfig) {
  ScriptedTransport t({"<candidates>[\"a\"]</candidates>", "<candidates>[\"a\",\"b\"]</candidates>\n"
                                                             "<final_output>[\"a\",\"b\",\"c\",\"d\"]</final_output>"});
  auto r = generate_queries(GenerationConfig::for_queries(), t, code());
  ASSERT_EQ(r.status, Status::Ok);
  EXPECT_EQ(r.trace.attempts.size(), 2u);
  EXPECT_EQ(r.queries->final.size(), 3u);
  EXPECT_EQ(t.requests()[0].temperature, 0.6);
  EXPECT_EQ(t.requests()[0].top_p, 0.9);
}

TEST(Http, TalksToChatCompletionServer) {
  q2d::test::MockChatServer server({"garbage", good_graph()});
  HttpChatTransport t(server.endpoint(), std::chrono::seconds{10});
  EXPECT_TRUE(t.reachable());
  auto r = generate_diagram(config(2), t, code(), kQuery, Mode::Finetuned, DetailLevel::Medium);
  EXPECT_EQ(r.status, Status::Ok);
  auto bodies = server.request_bodies();
  ASSERT_EQ(bodies.size(), 2u);
  auto first = Json::parse(bodies[0]);
  EXPECT_EQ(first["model"], "default");
  EXPECT_EQ(first["messages"][0]["role"], "user");
  EXPECT_EQ(first["max_tokens"], 8192);
}

TEST(Http, UnreachableEndpoint) {
  HttpChatTransport t("http://127.0.0.1:" + std::to_string(q2d::test::unused_port()) + "/v1", std::chrono::seconds{2});
  EXPECT_FALSE(t.reachable());
  auto r = generate_diagram(config(2), t, code(), kQuery, Mode::Finetuned, DetailLevel::Medium);
  EXPECT_EQ(r.status, Status::EndpointError);
}

TEST(Traces, AppendsOneLinePerTrace) {
  auto path = std::filesystem::temp_directory_path() / ("q2d_traces_" + new_trace_id()) / "gen.jsonl";
  TraceStore store(path);
  auto r = run({"{", good_graph()});
  store.append("t1", r.trace);
  store.append("t2", r.trace);
  std::ifstream in(path);
  std::string line;
  std::vector<Json> lines;
  while (std::getline(in, line)) lines.push_back(Json::parse(line));
  std::filesystem::remove_all(path.parent_path());
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0]["trace_id"], "t1");
  EXPECT_EQ(lines[0]["task"], "diagram");
  EXPECT_EQ(lines[0]["attempts"].size(), 2u);
}

TEST(Traces, IdsAreHex) {
  auto a = new_trace_id();
  EXPECT_EQ(a.size(), 16u);
  EXPECT_EQ(a.find_first_not_of("0123456789abcdef"), std::string::npos);
  EXPECT_NE(a, new_trace_id());
}
