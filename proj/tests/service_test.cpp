#include <gtest/gtest.h>

#include "q2d/service.hpp"
#include "support/mock_endpoint.hpp"
#include "support/test_support.hpp"

using namespace q2d;
using namespace q2d::service;
using q2d::test::read_fixture;
using q2d::test::read_fixture_json;

namespace {

std::filesystem::path trace_path() {
  return std::filesystem::temp_directory_path() / ("q2d_service_" + llm::new_trace_id()) / "service.jsonl";
}

struct Fixture {
  std::filesystem::path traces = trace_path();
  std::shared_ptr<llm::ChatTransport> transport;
  Service service;

  explicit Fixture(std::shared_ptr<llm::ChatTransport> t)
      : transport(t), service([&] {
          ServiceConfig c;
          c.trace_file = traces;
          return c;
        }(), t) {}
  explicit Fixture(std::vector<std::string> replies)
      : Fixture(std::make_shared<q2d::test::ScriptedTransport>(std::move(replies))) {}
  ~Fixture() { std::filesystem::remove_all(traces.parent_path()); }
};

std::string generate_body(std::string query = "How are messages dispatched?") {
  return Json{{"code", read_fixture("samples/cr_service_worker.ts")}, {"query", query}, {"level", "medium"}}.dump();
}

Json body(const ApiResponse& r) { return Json::parse(r.body); }

}  // namespace

TEST(Generate, ReturnsGraphAndMarkup) {
  Fixture f({read_fixture("samples/listener_graph.json")});
  auto r = f.service.generate(generate_body());
  ASSERT_EQ(r.status, 200) << r.body;
  auto j = body(r);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["attempts"], 1);
  EXPECT_EQ(j["graph"]["nodes"].size(), 9u);
  EXPECT_EQ(j["plantuml"].get<std::string>().rfind("@startuml", 0), 0u);
  EXPECT_EQ(j["mermaid"].get<std::string>().rfind("classDiagram", 0), 0u);
  EXPECT_EQ(j["defects"]["defects"].size(), 0u);
  EXPECT_TRUE(j["text_answer"].is_null());
  EXPECT_TRUE(std::filesystem::exists(f.traces));
}

TEST(Generate, BadRequests) {
  Fixture f({read_fixture("samples/listener_graph.json")});
  EXPECT_EQ(f.service.generate("{").status, 400);
  EXPECT_EQ(f.service.generate(generate_body("")).status, 400);
  EXPECT_EQ(f.service.generate(R"({"code": "x"})").status, 400);
  EXPECT_EQ(f.service.generate(R"({"code": "x", "query": "q", "level": "huge"})").status, 400);
  EXPECT_EQ(f.service.generate(R"({"code": "x", "query": "q", "mode": "other"})").status, 400);
  EXPECT_EQ(body(f.service.generate(generate_body(""))).at("error"), "InvalidRequest");
}

TEST(Generate, EndpointDownIs502) {
  Fixture f(std::make_shared<q2d::test::DownTransport>());
  auto r = f.service.generate(generate_body());
  EXPECT_EQ(r.status, 502);
  EXPECT_EQ(body(r)["error"], "EndpointError");
  EXPECT_FALSE(body(f.service.health())["endpoint_reachable"].get<bool>());
}

TEST(Generate, UnrepairedIs422) {
  Fixture f({"not json"});
  auto r = f.service.generate(generate_body());
  EXPECT_EQ(r.status, 422);
  auto j = body(r);
  EXPECT_EQ(j["status"], "unrepaired");
  EXPECT_EQ(j["attempts"], 3);
  EXPECT_TRUE(j["graph"].is_null());
  EXPECT_EQ(j["plantuml"], "");
  EXPECT_EQ(j["defects"]["defects"][0]["kind"], "broken_json");
}

TEST(Validate, ReportsDefects) {
  Fixture f({""});
  auto fx = read_fixture_json("lint/single_node.pos.json");
  auto r = f.service.validate(fx["graph"].dump());
  ASSERT_EQ(r.status, 200);
  auto j = body(r);
  std::set<std::string> kinds;
  for (const auto& d : j["defects"]) kinds.insert(d["kind"].get<std::string>());
  EXPECT_EQ(kinds, (std::set<std::string>{"single_node", "no_edges"}));
}

TEST(Validate, WithCodeEnablesNameCheck) {
  Fixture f({""});
  Json req{{"graph", read_fixture_json("samples/listener_graph.json")},
           {"code", "class Unrelated {}"}};
  auto j = body(f.service.validate(req.dump()));
  bool found = false;
  for (const auto& d : j["defects"]) found |= d["kind"] == "name_not_found_in_code";
  EXPECT_TRUE(found) << j.dump();
}

TEST(Validate, MalformedIs400) {
  Fixture f({""});
  auto r = f.service.validate("{\"nodes\": [");
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(body(r)["error"], "BrokenJson");
  auto s = f.service.validate(R"({"nodes": [1], "edges": [], "packages": []})");
  EXPECT_EQ(s.status, 400);
  EXPECT_EQ(body(s)["error"], "SchemaError");
  EXPECT_EQ(body(s)["path"], "$.nodes[0]");
}

TEST(Render, MatchesGolden) {
  Fixture f({""});
  auto graph = read_fixture("render/two_classes.json");
  auto m = f.service.render(graph, "mermaid");
  ASSERT_EQ(m.status, 200);
  EXPECT_EQ(body(m)["text"], read_fixture("render/two_classes.mmd"));
  auto p = f.service.render(graph, "");
  EXPECT_EQ(body(p)["text"], read_fixture("render/two_classes.puml"));
  EXPECT_EQ(f.service.render(graph, "svg").status, 400);
}

TEST(Render, NonDrawableIs422) {
  Fixture f({""});
  auto r = f.service.render(read_fixture_json("lint/package_recursion.pos.json")["graph"].dump(), "plantuml");
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(body(r)["error"], "NonDrawable");
}

TEST(Health, ReportsVersion) {
  Fixture f({""});
  auto j = body(f.service.health());
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["version"], std::string(kVersion));
  EXPECT_TRUE(j["endpoint_reachable"].get<bool>());
}

TEST(Stateless, RepeatedRequestsAgree) {
  Fixture f({""});
  auto graph = read_fixture("render/nested_packages.json");
  auto first = f.service.render(graph, "plantuml").body;
  f.service.validate(read_fixture_json("lint/single_node.pos.json")["graph"].dump());
  EXPECT_EQ(f.service.render(graph, "plantuml").body, first);
}

TEST(Socket, EndpointsOverHttp) {
  q2d::test::MockChatServer model({read_fixture("samples/listener_graph.json")});
  auto traces = trace_path();
  ServiceConfig c;
  c.trace_file = traces;
  c.generation.endpoint = model.endpoint();
  Service svc(c, std::make_shared<llm::HttpChatTransport>(model.endpoint(), std::chrono::seconds{10}));
  httplib::Server server;
  svc.mount(server);
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto h = cli.Get("/api/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  EXPECT_TRUE(Json::parse(h->body)["endpoint_reachable"].get<bool>());
  auto g = cli.Post("/api/generate", generate_body(), "application/json");
  ASSERT_TRUE(g);
  EXPECT_EQ(g->status, 200) << g->body;
  auto r = cli.Post("/api/render?format=mermaid", read_fixture("render/two_classes.json"), "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(Json::parse(r->body)["text"], read_fixture("render/two_classes.mmd"));

  server.stop();
  th.join();
  std::filesystem::remove_all(traces.parent_path());
}
