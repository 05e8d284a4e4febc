#include <algorithm>
#include <chrono>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "fake_chat.h"
#include "gen.h"
#include "gsnkit/detection.h"
#include "gsnkit/json_codec.h"
#include "gsnkit/prose.h"
#include "gsnkit/service.h"

using namespace gsnkit;
namespace fs = std::filesystem;

namespace {

struct Running {
  fs::path store;
  std::unique_ptr<Service> service;
  std::thread thread;
  std::unique_ptr<httplib::Client> client;

  explicit Running(ServiceConfig config = {}) {
    static int counter = 0;
    store = fs::temp_directory_path() /
            ("gsnkit-service-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(store);
    config.port = 0;
    config.store_root = store;
    config.corpus_dir = GSNKIT_CORPUS_DIR;
    service = std::make_unique<Service>(config);
    const int port = service->bind();
    thread = std::thread([this] { service->run(); });
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(60, 0);
    if (!config.token.empty()) client->set_bearer_token_auth(config.token);
  }

  ~Running() {
    service->stop();
    thread.join();
    fs::remove_all(store);
  }

  std::pair<int, Json> post(const std::string& path, const Json& body) {
    return unpack(client->Post(path, body.dump(), "application/json"));
  }
  std::pair<int, Json> put(const std::string& path, const Json& body) {
    return unpack(client->Put(path, body.dump(), "application/json"));
  }
  std::pair<int, Json> get(const std::string& path) { return unpack(client->Get(path)); }
  std::pair<int, Json> del(const std::string& path) { return unpack(client->Delete(path)); }

  static std::pair<int, Json> unpack(const httplib::Result& r) {
    REQUIRE(r);
    return {r->status, r->body.empty() ? Json() : Json::parse(r->body)};
  }
};

/// Checks the error envelope and returns its code.
std::string error_code(const Json& body) {
  REQUIRE(body.contains("error"));
  const Json& e = body["error"];
  CHECK(e["message"].is_string());
  CHECK(e["details"].is_object());
  const auto& codes = api_error_codes();
  const std::string code = e["code"].get<std::string>();
  CHECK(std::find(codes.begin(), codes.end(), code) != codes.end());
  return code;
}

const Corpus& corpus() {
  static const Corpus c = load_corpus(GSNKIT_CORPUS_DIR);
  return c;
}

const std::string kCaseText =
    "AssuranceCase: Pump\n"
    "Goal(G1, \"The pump is safe\")\n"
    "Context(C1, \"Hospital ward\")\n"
    "Solution(Sn1, \"Bolus tests\")\n"
    "SupportedBy(G1, Sn1)\n"
    "InContextOf(G1, C1)\n";

}  // namespace

TEST_CASE("error codes and statuses") {
  const auto& codes = api_error_codes();
  CHECK(codes.size() == 19);
  CHECK(api_error_status("ThresholdOutOfRange") == 400);
  CHECK(api_error_status("Unauthorized") == 401);
  CHECK(api_error_status("NotFound") == 404);
  CHECK(api_error_status("Conflict") == 409);
  CHECK(api_error_status("InvalidStructure") == 422);
  CHECK(api_error_status("BackendUnavailable") == 502);
  CHECK(api_error_status("whatever") == 500);
  for (const auto& c : codes) CHECK(api_error_status(c) >= 400);
}

TEST_CASE("health, parse, serialize, validate, export") {
  Running s;
  auto [status, body] = s.get("/api/health");
  CHECK(status == 200);
  CHECK(body["status"] == "ok");

  std::tie(status, body) = s.post("/api/parse", {{"text", kCaseText}});
  CHECK(status == 200);
  CHECK(body["ok"] == true);
  CHECK(body["kind"] == "AssuranceCase");
  const GoalStructure parsed = structure_from_json(body["structure"]);
  CHECK(parsed == parse(kCaseText).structure);

  std::tie(status, body) = s.post("/api/parse", {{"text", "AssuranceCase: x\nGoal(G1, \"a\"\n"}});
  CHECK(status == 200);
  CHECK(body["ok"] == false);
  CHECK_FALSE(body["diagnostics"].empty());

  std::tie(status, body) = s.post("/api/parse", {{"text", "Pattern: P\nGoal(G1, \"{System} is safe\")\n"}});
  CHECK(body["kind"] == "Pattern");
  CHECK(body["structure"]["placeholders"] == Json{"System"});

  std::tie(status, body) = s.post("/api/serialize", {{"structure", to_json(parsed)}});
  CHECK(status == 200);
  CHECK(body["text"] == serialize(parsed).str());

  std::tie(status, body) = s.post("/api/validate", {{"text", kCaseText}});
  CHECK(body["valid"] == true);
  CHECK(body["stats"]["elements"] == 3);

  GoalStructure broken("b", {{"Sn1", ElementKind::kSolution, "x", false}, {"G1", ElementKind::kGoal, "y", false}},
                       {{"Sn1", "G1", RelationshipKind::kSupportedBy}});
  std::tie(status, body) = s.post("/api/validate", {{"structure", to_json(broken)}});
  CHECK(status == 200);
  CHECK(body["valid"] == false);
  CHECK(body["violations"][0]["code"] == "IllegalSupportedBySource");

  std::tie(status, body) = s.post("/api/serialize", {{"structure", to_json(broken)}});
  CHECK(status == 422);
  CHECK(error_code(body) == "InvalidStructure");
  CHECK_FALSE(body["error"]["details"]["violations"].empty());

  auto r = s.client->Post("/api/export?format=dot", Json{{"text", kCaseText}}.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->body.rfind("digraph", 0) == 0);
  r = s.client->Post("/api/export", Json{{"text", kCaseText}}.dump(), "application/json");
  CHECK(r->get_header_value("Content-Type") == "image/svg+xml");
  CHECK(r->body.find("<svg") != std::string::npos);
  r = s.client->Post("/api/export", Json{{"text", kCaseText}, {"format", "json"}}.dump(), "application/json");
  CHECK(structure_from_json(Json::parse(r->body)) == parsed);
  std::tie(status, body) = s.post("/api/export", {{"text", kCaseText}, {"format", "pdf"}});
  CHECK(status == 400);
  CHECK(body["error"]["details"]["field"] == "format");
}

TEST_CASE("request errors use the envelope") {
  Running s;
  auto r = s.client->Post("/api/parse", "{not json", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);
  CHECK(error_code(Json::parse(r->body)) == "MalformedJson");

  auto [status, body] = s.post("/api/parse", Json::object());
  CHECK(status == 400);
  CHECK(error_code(body) == "MissingInput");

  std::tie(status, body) = s.post("/api/validate", {{"text", "nonsense"}});
  CHECK(status == 422);
  CHECK(error_code(body) == "InvalidStructure");
  CHECK_FALSE(body["error"]["details"]["diagnostics"].empty());

  Json bad = to_json(parse(kCaseText).structure);
  bad["elements"][0]["kind"] = "Claim";
  std::tie(status, body) = s.post("/api/validate", {{"structure", bad}});
  CHECK(status == 400);
  CHECK(error_code(body) == "InvalidArgument");
  CHECK(body["error"]["details"]["field"] == "structure.elements[0].kind");

  std::tie(status, body) = s.get("/api/nowhere");
  CHECK(status == 404);
  CHECK(error_code(body) == "NotFound");

  std::tie(status, body) = s.get("/api/jobs/job-999");
  CHECK(status == 404);
  CHECK(error_code(body) == "NotFound");
}

TEST_CASE("authentication and CORS") {
  ServiceConfig config;
  config.token = "s3cret";
  config.cors_origin = "http://localhost:5173";
  Running s(config);

  httplib::Client anonymous("127.0.0.1", s.client->port());
  auto r = anonymous.Get("/api/projects");
  REQUIRE(r);
  CHECK(r->status == 401);
  CHECK(error_code(Json::parse(r->body)) == "Unauthorized");
  anonymous.set_bearer_token_auth("wrong");
  CHECK(anonymous.Get("/api/projects")->status == 401);
  CHECK(anonymous.Get("/api/health")->status == 200);

  r = s.client->Get("/api/projects");
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");

  httplib::Headers headers = {{"Origin", "http://localhost:5173"},
                              {"Access-Control-Request-Method", "POST"}};
  r = anonymous.Options("/api/detect", headers);
  REQUIRE(r);
  CHECK(r->status == 204);
  CHECK(r->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
  CHECK(r->get_header_value("Access-Control-Allow-Headers").find("Authorization") != std::string::npos);
}

TEST_CASE("detect") {
  Running s;
  auto [status, body] = s.post("/api/detect", {{"corpus_case", "bluerov2"}, {"threshold", 1.2}});
  CHECK(status == 400);
  CHECK(error_code(body) == "ThresholdOutOfRange");

  std::tie(status, body) = s.post("/api/detect", {{"corpus_case", "bluerov2"}});
  CHECK(status == 400);
  CHECK(error_code(body) == "MissingInput");

  std::tie(status, body) = s.post("/api/detect", {{"corpus_case", "acas_xu"}, {"threshold", 0.8}});
  CHECK(status == 200);
  CHECK(body["detected"].empty());

  std::tie(status, body) = s.post("/api/detect", {{"corpus_case", "nope"}, {"threshold", 0.2}});
  CHECK(status == 404);
  CHECK(body["error"]["details"]["field"] == "corpus_case");

  std::tie(status, body) =
      s.post("/api/detect", {{"corpus_case", "bluerov2"}, {"threshold", 0.2}, {"backend", "ghost"}});
  CHECK(status == 404);

  for (const auto& e : corpus().entries) {
    for (double t : {0.2, 0.4, 0.6}) {
      CAPTURE(e.case_name);
      CAPTURE(t);
      DetectionJob job;
      job.assurance_case = e.assurance_case;
      for (const auto& n : e.candidates()) job.candidates.push_back({n, corpus().patterns.at(n)});
      job.rule = DetectionRule::uniform(t);
      const DetectionReport expected = detect(job);

      std::tie(status, body) = s.post("/api/detect", {{"corpus_case", e.case_name}, {"threshold", t}});
      REQUIRE(status == 200);
      CHECK(detection_report_from_json(body) == expected);
      const auto found = expected.detected();
      CHECK(body["detected"] == Json(std::vector<std::string>(found.begin(), found.end())));

      // The same request with inline documents.
      Json patterns = Json::array();
      for (const auto& c : job.candidates) {
        patterns.push_back({{"name", c.name}, {"text", serialize(c.pattern).str()}});
      }
      std::tie(status, body) =
          s.post("/api/detect", {{"case_text", serialize(e.assurance_case).str()},
                                 {"patterns", patterns},
                                 {"thresholds", {{"bleu", t}, {"cosine", t}}}});
      REQUIRE(status == 200);
      CHECK(detection_report_from_json(body).candidates == expected.candidates);
    }
  }
}

TEST_CASE("detect with a configured backend") {
  gsnkit::testing::FakeChatServer chat([](const httplib::Request&, httplib::Response& res) {
    res.set_content(gsnkit::testing::FakeChatServer::completion("Verdict: not detected"), "application/json");
  });
  ServiceConfig config;
  GenerationBackendConfig backend;
  backend.name = "fake";
  backend.endpoint = chat.url();
  backend.model = "m";
  config.backends.push_back(backend);
  Running s(config);
  auto [status, body] =
      s.post("/api/detect", {{"corpus_case", "bluerov2"}, {"threshold", 0.2}, {"runs", 2}, {"backend", "fake"}});
  REQUIRE(status == 200);
  CHECK(body["detected"] == Json{"alarp"});
  CHECK(body["candidates"][0]["disagreements"] == 2);
  CHECK(chat.bodies().size() == 4);
}

TEST_CASE("instantiate") {
  Running s;
  const auto& pattern = corpus().patterns.at("gpca_safety");
  const auto& knowledge = corpus().knowledge.at("gpca");
  auto [status, body] =
      s.post("/api/instantiate", {{"pattern", to_json(pattern)}, {"knowledge", to_json(knowledge)}});
  REQUIRE(status == 200);
  CHECK(body["ok"] == true);
  const GoalStructure out = structure_from_json(body["structure"]);
  CHECK(extract_placeholders(out).empty());
  CHECK(out.name() == knowledge.system);
  CHECK(body["text"] == serialize(out).str());

  std::tie(status, body) = s.post("/api/instantiate", {{"pattern", to_json(pattern)}});
  CHECK(status == 400);
  CHECK(error_code(body) == "MissingInput");

  std::tie(status, body) = s.post("/api/instantiate", {{"pattern", to_json(pattern)},
                                                      {"knowledge", {{"system", "x"}, {"bindings", {{"A", 1}}}}}});
  CHECK(status == 400);
  CHECK(body["error"]["details"]["field"] == "knowledge.bindings.A");
}

TEST_CASE("project routes") {
  Running s;
  auto [status, body] = s.post("/api/projects", {{"name", "Pump Study"}});
  CHECK(status == 201);
  const std::string first = body["revision"];
  std::tie(status, body) = s.post("/api/projects", {{"name", "Pump Study"}});
  CHECK(status == 409);
  CHECK(error_code(body) == "Conflict");

  std::tie(status, body) = s.get("/api/projects");
  CHECK(body["projects"] == Json{"Pump Study"});

  const std::string base = "/api/projects/Pump%20Study";
  std::tie(status, body) = s.put(base + "/cases/pump", {{"text", kCaseText}});
  CHECK(status == 200);
  const std::string second = body["revision"];
  CHECK(second != first);

  const auto pattern = testgen::fixture_project().patterns.begin()->second;
  std::tie(status, body) = s.put(base + "/patterns/p", {{"structure", to_json(pattern)}});
  CHECK(status == 200);
  std::tie(status, body) = s.put(base + "/knowledge/k", to_json(DomainKnowledge{"Pump", {"fact"}, {{"X", "y"}}}));
  CHECK(status == 200);
  std::tie(status, body) =
      s.put(base + "/reports/r", to_json(EvaluationReport{{{"S", "deterministic", 0.2, 1, 1, 1, 5, false, ""}}}));
  CHECK(status == 200);

  std::tie(status, body) = s.get(base + "/cases/pump");
  CHECK(status == 200);
  CHECK(structure_from_json(body) == parse(kCaseText).structure);
  CHECK(body["text"] == serialize(parse(kCaseText).structure).str());
  std::tie(status, body) = s.get(base + "/patterns/p");
  CHECK(pattern_from_json(body) == pattern);
  std::tie(status, body) = s.get(base + "/knowledge/k");
  CHECK(knowledge_from_json(body).facts == std::vector<std::string>{"fact"});
  std::tie(status, body) = s.get(base + "/reports/r");
  CHECK(evaluation_report_from_json(body).rows.size() == 1);

  std::tie(status, body) = s.get(base + "/cases/pump?revision=" + first);
  CHECK(status == 404);
  std::tie(status, body) = s.get(base + "?revision=" + second);
  CHECK(body["revision"] == second);
  CHECK(body["cases"].contains("pump"));
  CHECK(body["patterns"].empty());
  std::tie(status, body) = s.get(base);
  CHECK(body["patterns"].contains("p"));

  GoalStructure broken("b", {{"Sn1", ElementKind::kSolution, "x", false}}, {{"Sn1", "Sn1", RelationshipKind::kSupportedBy}});
  std::tie(status, body) = s.put(base + "/cases/bad", {{"structure", to_json(broken)}});
  CHECK(status == 422);
  std::tie(status, body) = s.put(base + "/widgets/x", {{"text", kCaseText}});
  CHECK(status == 404);
  std::tie(status, body) = s.put("/api/projects/ghost/cases/x", {{"text", kCaseText}});
  CHECK(status == 404);

  std::tie(status, body) = s.post("/api/instantiate", {{"project", "Pump Study"},
                                                      {"pattern_name", "p"},
                                                      {"knowledge", {{"system", "Pump"}, {"bindings", Json::object()}}},
                                                      {"save_as", "derived"}});
  CHECK(status == 200);
  CHECK(body["revision"].is_string());

  std::tie(status, body) = s.post("/api/detect", {{"project", "Pump Study"}, {"case_name", "pump"}, {"threshold", 0.9}});
  CHECK(status == 200);
  CHECK(body["candidates"].size() == 1);

  std::tie(status, body) = s.del(base + "/cases/derived");
  CHECK(status == 200);
  std::tie(status, body) = s.del(base + "/cases/derived");
  CHECK(status == 404);

  std::tie(status, body) = s.get(base + "/revisions");
  const std::size_t count = body["revisions"].size();
  CHECK(count == 7);
  CHECK(body["head"] == body["revisions"].back()["id"]);
  std::tie(status, body) = s.post(base + "/prune", {{"keep", 2}});
  CHECK(body["removed"] == count - 2);
  std::tie(status, body) = s.post(base + "/prune", {{"keep", -1}});
  CHECK(status == 400);
  std::tie(status, body) = s.get(base + "/revisions");
  CHECK(body["revisions"].size() == 2);
}

TEST_CASE("evaluate job") {
  Running s;
  s.post("/api/projects", {{"name", "eval"}});
  auto [status, body] = s.post("/api/evaluate", {{"thresholds", {0.2, 0.8}}, {"runs", 2}, {"project", "eval"}});
  CHECK(status == 202);
  const std::string job = body["job"];
  for (int i = 0; i < 600; ++i) {
    std::tie(status, body) = s.get("/api/jobs/" + job);
    if (body["status"] != "running") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  REQUIRE(body["status"] == "done");
  const EvaluationReport report = evaluation_report_from_json(body["report"]);
  CHECK(report.rows.size() == 10);
  CHECK(body["table"] == report.to_table());

  EvaluationOptions options;
  options.thresholds = {0.2, 0.8};
  options.runs = 2;
  CHECK(report == evaluate_corpus(corpus(), options));
  std::tie(status, body) = s.get("/api/projects/eval/reports/evaluation");
  CHECK(status == 200);
  CHECK(evaluation_report_from_json(body) == report);

  std::tie(status, body) = s.post("/api/evaluate", {{"thresholds", {1.5}}});
  CHECK(status == 400);
  CHECK(error_code(body) == "ThresholdOutOfRange");
  std::tie(status, body) = s.post("/api/evaluate", {{"project", "ghost"}});
  CHECK(status == 404);
}
