#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gen.h"
#include "gsnkit/cli.h"
#include "gsnkit/json_codec.h"
#include "gsnkit/persistence.h"
#include "gsnkit/prose.h"

using namespace gsnkit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "gsnkit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("gsnkit-cli-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream(dir / name, std::ios::binary) << content;
    return (dir / name).string();
  }
  std::string read(const std::string& name) const {
    std::ifstream in(dir / name, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }
};

const std::string kCorpus = GSNKIT_CORPUS_DIR;
const std::string kCase = kCorpus + "/cases/bluerov2.gsn.txt";
const std::string kAlarp = kCorpus + "/patterns/alarp.gsn.txt";
const std::string kResonate = kCorpus + "/patterns/resonate.gsn.txt";
const std::string kKnowledge = kCorpus + "/knowledge/bluerov2.json";

bool contains(const std::string& s, std::string_view what) { return s.find(what) != std::string::npos; }

}  // namespace

TEST_CASE("usage and help") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  const auto help = run({"--help"});
  CHECK(help.code == kExitOk);
  CHECK(contains(help.out, "evaluate"));
  CHECK(run({"--version"}).code == kExitOk);
  CHECK(run({"validate"}).code == kExitUsage);
}

TEST_CASE("evaluate prints the golden table") {
  std::ifstream in(fs::path(GSNKIT_TEST_DATA_DIR) / "evaluate_table.txt");
  std::stringstream golden;
  golden << in.rdbuf();
  Scratch s;
  const auto r = run({"evaluate", "--corpus", kCorpus, "--report", (s.dir / "records.jsonl").string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out == golden.str());
  const std::string records = s.read("records.jsonl");
  CHECK(std::count(records.begin(), records.end(), '\n') == 25);

  CHECK(run({"evaluate", "--corpus", kCorpus, "--thresholds", "0.2,1.5"}).code == kExitUsage);
  CHECK(run({"evaluate", "--corpus", "/nonexistent"}).code == kExitDomainFailure);
  CHECK(run({"evaluate", "--corpus", kCorpus, "--backend", "ghost"}).code == kExitDomainFailure);
}

TEST_CASE("evaluate with an unreachable backend exits 3") {
  Scratch s;
  const auto config = s.write("backends.json", R"({"backends": [{"name": "dead", "model": "m",
      "endpoint": "http://127.0.0.1:1/v1/chat/completions", "timeout_seconds": 1}]})");
  const auto r = run({"evaluate", "--corpus", kCorpus, "--thresholds", "0.2", "--runs", "1", "--backend",
                      "deterministic", "--backend", "dead", "--backend-config", config});
  CHECK(r.code == kExitBackendFailure);
  CHECK(contains(r.out, "failed"));
}

TEST_CASE("convert") {
  Scratch s;
  auto r = run({"convert", kCase, "--to", "json"});
  REQUIRE(r.code == kExitOk);
  const GoalStructure structure = structure_from_json(Json::parse(r.out));
  const std::string json_path = s.write("case.json", r.out);

  r = run({"convert", json_path, "-o", (s.dir / "back.gsn.txt").string()});
  CHECK(r.code == kExitOk);
  CHECK(parse(s.read("back.gsn.txt")).structure == structure);

  r = run({"convert", kAlarp, "--to", "prose"});
  CHECK(r.out.rfind("Pattern: ", 0) == 0);
  CHECK(run({"convert", kCase, "--to", "dot"}).out.rfind("digraph", 0) == 0);
  CHECK(run({"convert", kCase, "-o", (s.dir / "c.svg").string()}).code == kExitOk);
  CHECK(contains(s.read("c.svg"), "<svg"));
  CHECK(run({"convert", kCase, "--to", "pdf"}).code == kExitUsage);

  const auto bad = s.write("bad.gsn.txt", "AssuranceCase: x\nGoal(G1, \"a\")\nSupportedBy(G1, G9)\n");
  r = run({"convert", bad, "--to", "json"});
  CHECK(r.code == kExitDomainFailure);
  CHECK(contains(r.err, "bad.gsn.txt:3:"));
  CHECK(run({"convert", (s.dir / "missing.txt").string()}).code == kExitDomainFailure);
}

TEST_CASE("validate and stats") {
  Scratch s;
  auto r = run({"validate", kCase, kAlarp});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "bluerov2.gsn.txt: ok"));

  const auto illegal = s.write("illegal.gsn.txt",
                               "AssuranceCase: x\nGoal(G1, \"a\")\nSolution(Sn1, \"b\")\nGoal(G2, \"c\")\n"
                               "SupportedBy(G1, Sn1)\nSupportedBy(Sn1, G2)\n");
  r = run({"validate", kCase, illegal});
  CHECK(r.code == kExitDomainFailure);
  CHECK(contains(r.err, "IllegalSupportedBySource"));

  r = run({"validate", "--json", illegal});
  CHECK(r.code == kExitDomainFailure);
  const Json j = Json::parse(r.out);
  CHECK(j[0]["valid"] == false);
  CHECK(j[0]["file"] == illegal);

  r = run({"stats", kCase, kAlarp});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "placeholders"));
  CHECK(contains(r.out, "alarp"));
  CHECK(run({"stats", illegal}).code == kExitDomainFailure);
}

TEST_CASE("detect") {
  auto r = run({"detect", "--case", kCase, "--pattern", kAlarp, "--pattern", kResonate, "--threshold", "0.2"});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "rule: bleu >= 0.2 AND cosine >= 0.2"));
  CHECK(contains(r.out, "alarp   "));
  CHECK(contains(r.out, "detected      1/1"));
  CHECK(contains(r.out, "not detected  0/1"));

  r = run({"detect", "--case", kCase, "--pattern", kAlarp, "--threshold-bleu", "0.9", "--threshold-cosine", "0.1",
           "--json"});
  CHECK(r.code == kExitOk);
  CHECK(detection_report_from_json(Json::parse(r.out)).detected().empty());

  CHECK(run({"detect", "--case", kCase, "--pattern", kAlarp, "--threshold", "1.2"}).code == kExitUsage);
  CHECK(run({"detect", "--case", kCase, "--pattern", kAlarp}).code == kExitUsage);
  CHECK(run({"detect", "--case", kCase, "--pattern", kAlarp, "--threshold-bleu", "0.2"}).code == kExitUsage);

  Scratch s;
  const auto reply = s.write("reply.txt", "Verdict: not detected\n");
  r = run({"detect", "--case", kCase, "--pattern", kAlarp, "--threshold", "0.2", "--runs", "3", "--backend",
           "mock:" + reply});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "detected      3/3  disagreements 3"));
}

TEST_CASE("instantiate") {
  Scratch s;
  auto r = run({"instantiate", "--pattern", kAlarp, "--knowledge", kKnowledge});
  REQUIRE(r.code == kExitOk);
  const auto parsed = parse(r.out);
  CHECK(parsed.ok());
  CHECK(parsed.structure.name() == "BLUEROV2");
  CHECK(extract_placeholders(parsed.structure).empty());

  r = run({"instantiate", "--pattern", kAlarp, "--knowledge", kKnowledge, "--format", "json", "-o",
           (s.dir / "out.json").string()});
  CHECK(r.code == kExitOk);
  CHECK(structure_from_json(Json::parse(s.read("out.json"))) == parsed.structure);

  const auto reply = s.write("reply.txt", "```\nAssuranceCase: BLUEROV2\nGoal(G1, \"BlueROV2 is safe\")\n"
                                          "Solution(Sn1, \"Sea trials\")\nSupportedBy(G1, Sn1)\n```\n");
  r = run({"instantiate", "--pattern", kAlarp, "--knowledge", kKnowledge, "--backend", "mock:" + reply});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "Goal(G1, \"BlueROV2 is safe\")"));

  const auto broken = s.write("broken.txt", "AssuranceCase: B\nGoal(G1, \"a\")\nGoal(G1, \"b\")\n");
  r = run({"instantiate", "--pattern", kAlarp, "--knowledge", kKnowledge, "--backend", "mock:" + broken});
  CHECK(r.code == kExitDomainFailure);
  CHECK(contains(r.err, "DuplicateId"));
  CHECK(r.out == s.read("broken.txt"));

  const auto refusal = s.write("refusal.txt", "I'm sorry, but I cannot help with that.");
  r = run({"instantiate", "--pattern", kAlarp, "--knowledge", kKnowledge, "--backend", "mock:" + refusal});
  CHECK(r.code == kExitBackendFailure);
  CHECK(contains(r.err, "BackendRefusal"));

  const auto knowledge = s.write("k.json", "{");
  CHECK(run({"instantiate", "--pattern", kAlarp, "--knowledge", knowledge}).code == kExitDomainFailure);
}

TEST_CASE("projects") {
  const char* env = std::getenv("GSNKIT_STORE");
  Scratch s;
  const fs::path root = env ? fs::path(env) : s.dir / "store";
  fs::remove_all(root);
  ProjectStore store(root);
  Project p = testgen::fixture_project();
  const std::string first = store.save(p);
  p.modified += 1;
  const std::string second = store.save(p);

  const std::vector<std::string> where = env ? std::vector<std::string>{} : std::vector<std::string>{"--store", root.string()};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.begin() + 1, where.begin(), where.end());
    return run(args);
  };
  auto r = with({"projects", "list"});
  CHECK(r.code == kExitOk);
  CHECK(r.out == "Fixture Project\n");
  r = with({"projects", "history", "Fixture Project"});
  CHECK(r.out == first + " " + std::to_string(p.modified - 1) + "\n" + second + " " + std::to_string(p.modified) +
                     " HEAD\n");
  r = with({"projects", "prune", "Fixture Project", "--keep", "0"});
  CHECK(r.out == "removed 1 revisions\n");
  CHECK(with({"projects", "history", "nope"}).code == kExitDomainFailure);
  fs::remove_all(root);
}
