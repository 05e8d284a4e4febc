#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gen.h"
#include "gsnkit/detection.h"
#include "gsnkit/error.h"

using namespace gsnkit;
namespace fs = std::filesystem;

namespace {

const Corpus& corpus() {
  static const Corpus c = load_corpus(GSNKIT_CORPUS_DIR);
  return c;
}

const CorpusEntry& entry(const std::string& case_name) {
  for (const auto& e : corpus().entries) {
    if (e.case_name == case_name) return e;
  }
  throw std::runtime_error("no entry " + case_name);
}

DetectionJob job_for(const std::string& case_name, double threshold, std::size_t runs = 1) {
  DetectionJob job;
  const auto& e = entry(case_name);
  job.assurance_case = e.assurance_case;
  for (const auto& name : e.candidates()) job.candidates.push_back({name, corpus().patterns.at(name)});
  job.rule = DetectionRule::uniform(threshold);
  job.runs = runs;
  return job;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no exception");
  return ErrorCode::kInvalidArgument;
}

const EvaluationRow& row(const EvaluationReport& r, const std::string& system, double t) {
  for (const auto& x : r.rows) {
    if (x.system == system && x.threshold == t) return x;
  }
  throw std::runtime_error("no row");
}

}  // namespace

TEST_CASE("scores") {
  const std::set<std::string> truth = {"a", "b"};
  CHECK(precision({"a"}, truth) == 1.0);
  CHECK(recall({"a"}, truth) == 0.5);
  CHECK(precision({}, truth) == 0.0);
  CHECK(recall({}, truth) == 0.0);
  CHECK(precision({"a", "c"}, truth) == 0.5);
  CHECK(code_of([] { recall({"a"}, {}); }) == ErrorCode::kEmptyGroundTruth);
  CHECK(f_measure(1, 0.5) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(f_measure(0, 0) == 0.0);
  CHECK(f_measure(1, 1) == 1.0);
  testgen::Rng rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double p = unit(rng);
    const double r = unit(rng);
    CHECK(f_measure(p, r) == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-12));
  }
}

TEST_CASE("format_score") {
  CHECK(format_score(2.0 / 3.0) == "0.67");
  CHECK(format_score(0.5) == "0.5");
  CHECK(format_score(1.0) == "1");
  CHECK(format_score(0.0) == "0");
  CHECK(format_score(-0.0001) == "0");
  CHECK(format_score(0.2) == "0.2");
}

TEST_CASE("corpus loads") {
  const auto& c = corpus();
  CHECK(c.patterns.size() == 6);
  REQUIRE(c.entries.size() == 5);
  CHECK(c.entries[0].system == "ACAS XU");
  CHECK(entry("bluerov2").truth == std::set<std::string>{"alarp", "resonate"});
  CHECK(entry("bluerov2").candidates() == std::vector<std::string>{"alarp", "resonate"});
  CHECK(c.knowledge.count("gpca") == 1);
  for (const auto& e : c.entries) CHECK_FALSE(has_errors(validate(e.assurance_case)));
}

TEST_CASE("corpus errors") {
  const fs::path dir = fs::temp_directory_path() / ("gsnkit-corpus-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  CHECK(code_of([&] { load_corpus(dir); }) == ErrorCode::kNotFound);
  fs::create_directories(dir / "cases");
  fs::create_directories(dir / "patterns");
  std::ofstream(dir / "cases" / "c.gsn.txt") << "AssuranceCase: c\nGoal(G1, \"x\")\n";
  std::ofstream(dir / "patterns" / "p.gsn.txt") << "Pattern: p\nGoal(G1, \"{X}\")\n";
  std::ofstream(dir / "truth.json") << R"({"systems": [{"system": "S", "case": "c", "patterns": ["q"]}]})";
  CHECK(code_of([&] { load_corpus(dir); }) == ErrorCode::kInvalidArgument);
  std::ofstream(dir / "truth.json") << R"({"systems": [{"system": "S", "case": "c", "patterns": []}]})";
  CHECK(code_of([&] { load_corpus(dir); }) == ErrorCode::kEmptyGroundTruth);
  std::ofstream(dir / "truth.json") << R"({"systems": [{"system": "S", "case": "c", "patterns": ["p"]}]})";
  CHECK(load_corpus(dir).entries.size() == 1);
  std::ofstream(dir / "cases" / "c.gsn.txt") << "AssuranceCase: c\nGoal(G1, \"x\"\n";
  CHECK(code_of([&] { load_corpus(dir); }) == ErrorCode::kInvalidStructure);
  fs::remove_all(dir);
}

TEST_CASE("deterministic detection on the two-pattern case") {
  const auto report = detect(job_for("bluerov2", 0.2, 5));
  REQUIRE(report.candidates.size() == 2);
  const auto& alarp = report.candidates[0];
  const auto& resonate = report.candidates[1];
  CHECK(alarp.pattern == "alarp");
  CHECK(alarp.detected);
  CHECK(alarp.detections == 5);
  CHECK(alarp.runs.size() == 5);
  CHECK(alarp.runs[0].outcome.results[0].value == doctest::Approx(0.6403).epsilon(1e-3));
  CHECK_FALSE(resonate.detected);
  CHECK(resonate.detections == 0);
  CHECK(report.detected() == std::set<std::string>{"alarp"});
  CHECK(report.detected_in_run(3) == std::set<std::string>{"alarp"});
  CHECK_FALSE(alarp.runs[0].model_verdict.has_value());
}

TEST_CASE("high thresholds detect nothing") {
  for (const auto& e : corpus().entries) {
    CHECK(detect(job_for(e.case_name, 0.8)).detected().empty());
  }
}

TEST_CASE("job validation") {
  auto job = job_for("gpca", 0.4);
  job.runs = 0;
  CHECK(code_of([&] { detect(job); }) == ErrorCode::kInvalidArgument);
  job = job_for("gpca", 0.4);
  job.candidates.clear();
  CHECK(code_of([&] { detect(job); }) == ErrorCode::kInvalidArgument);
  job = job_for("gpca", 0.4);
  job.assurance_case = GoalStructure();
  CHECK(code_of([&] { detect(job); }) == ErrorCode::kInvalidStructure);
}

TEST_CASE("backend-assisted detection") {
  SUBCASE("agreeing model") {
    auto job = job_for("bluerov2", 0.2, 3);
    auto backend = std::make_shared<ScriptedBackend>("scripted", [](const PromptPair& p) -> std::string {
      const bool high = p.user.find("- bleu = 0.6") != std::string::npos;
      return high ? "Step 1 ...\nVerdict: detected" : "Verdict: not detected";
    });
    job.backend = backend;
    const auto report = detect(job);
    CHECK(backend->prompts().size() == 6);
    CHECK(report.candidates[0].disagreements == 0);
    CHECK(report.candidates[1].disagreements == 0);
    CHECK(report.candidates[0].runs[0].model_verdict == true);
    CHECK(report.candidates[1].runs[0].model_verdict == false);
  }
  SUBCASE("contrary or silent model does not change the verdict") {
    auto job = job_for("bluerov2", 0.2, 2);
    job.backend = std::make_shared<ScriptedBackend>("scripted", std::vector<std::string>{"Verdict: not detected", "no idea"});
    const auto report = detect(job);
    CHECK(report.detected() == std::set<std::string>{"alarp"});
    CHECK(report.candidates[0].disagreements == 2);
    CHECK(report.candidates[1].disagreements == 1);
  }
  SUBCASE("backend errors propagate") {
    auto job = job_for("gpca", 0.2);
    job.backend = std::make_shared<ScriptedBackend>("down", [](const PromptPair&) -> std::string {
      throw Error(ErrorCode::kBackendUnavailable, "down");
    });
    CHECK(code_of([&] { detect(job); }) == ErrorCode::kBackendUnavailable);
  }
}

TEST_CASE("evaluation reproduces the table shape") {
  EvaluationOptions options;
  options.workers = 3;
  const auto report = evaluate_corpus(corpus(), options);
  REQUIRE(report.rows.size() == 25);
  for (const auto& r : report.rows) {
    CHECK_FALSE(r.failed);
    CHECK(r.runs == 5);
    if (r.threshold >= 0.8) {
      CHECK(r.recall == 0);
      CHECK(r.precision == 0);
      CHECK(r.f_measure == 0);
    }
  }
  for (const auto& e : corpus().entries) CHECK(row(report, e.system, 0.2).recall > 0);
  for (double t : {0.2, 0.4, 0.6}) {
    const auto& b = row(report, "BLUEROV2", t);
    CHECK(b.recall == 0.5);
    CHECK(b.precision == 1.0);
    CHECK(b.f_measure == doctest::Approx(0.67).epsilon(0.005 / 0.67));
  }
  CHECK(report.rows[0].system == "ACAS XU");
  CHECK(report.rows[0].threshold == 0.2);
  CHECK(report.rows[4].threshold == 1.0);

  EvaluationOptions serial = options;
  serial.workers = 1;
  CHECK(evaluate_corpus(corpus(), serial) == report);

  const auto table = report.to_table();
  CHECK(table.find("BLUEROV2     deterministic  0.5  1    0.67") != std::string::npos);
  const auto records = report.to_records();
  CHECK(std::count(records.begin(), records.end(), '\n') == 25);
}

TEST_CASE("failing backend cells are marked") {
  EvaluationOptions options;
  options.thresholds = {0.4, 0.2, 0.4};
  options.runs = 1;
  options.backends = {{"deterministic", nullptr},
                      {"down", std::make_shared<ScriptedBackend>("down", [](const PromptPair&) -> std::string {
                         throw Error(ErrorCode::kBackendUnavailable, "connection refused");
                       })}};
  const auto report = evaluate_corpus(corpus(), options);
  REQUIRE(report.rows.size() == 5 * 2 * 2);
  CHECK(report.rows[0].backend == "deterministic");
  CHECK(report.rows[0].threshold == 0.2);
  CHECK_FALSE(report.rows[0].failed);
  CHECK(report.rows[2].backend == "down");
  CHECK(report.rows[2].failed);
  CHECK(report.rows[2].error.find("connection refused") != std::string::npos);
  CHECK(report.to_table().find("failed") != std::string::npos);
}

TEST_CASE("evaluation options are checked") {
  EvaluationOptions options;
  options.thresholds = {0.2, 1.5};
  CHECK(code_of([&] { evaluate_corpus(corpus(), options); }) == ErrorCode::kThresholdOutOfRange);
  options.thresholds = {};
  CHECK(code_of([&] { evaluate_corpus(corpus(), options); }) == ErrorCode::kInvalidArgument);
  options.thresholds = {0.2};
  options.runs = 0;
  CHECK(code_of([&] { evaluate_corpus(corpus(), options); }) == ErrorCode::kInvalidArgument);
}
