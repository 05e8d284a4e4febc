#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "gen.h"
#include "gsnkit/error.h"
#include "gsnkit/persistence.h"

using namespace gsnkit;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFixtureRevision = "065ef2e0d10a2fb3779666b390f12714c75641aa2a1c3007f4b85bbdde8f4f83";

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("gsnkit-store-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& item : fs::recursive_directory_iterator(dir)) {
    if (!item.is_regular_file() || item.path().filename() == ".lock") continue;
    out[fs::relative(item.path(), dir).generic_string()] = slurp(item.path());
  }
  return out;
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

}  // namespace

TEST_CASE("hashing and names") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(encode_name("Fixture Project") == "Fixture%20Project");
  CHECK(encode_name("..") == "%2E.");
  CHECK(encode_name("a/b") == "a%2Fb");
  CHECK(encode_name("r-1_x") == "r-1_x");
  testgen::Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const std::string name = testgen::random_name(rng) + "/..%\xC3\xA9";
    CHECK(decode_name(encode_name(name)) == name);
  }
  CHECK(code_of([] { decode_name("%2"); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { decode_name("%zz"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("store layout matches the golden fixture") {
  TempDir dir;
  ProjectStore store(dir.path);
  CHECK(store.save(testgen::fixture_project()) == kFixtureRevision);
  const fs::path golden = fs::path(GSNKIT_TEST_DATA_DIR) / "fixture_store";
  CHECK(tree(dir.path) == tree(golden));
}

TEST_CASE("golden fixture loads") {
  TempDir dir;
  fs::copy(fs::path(GSNKIT_TEST_DATA_DIR) / "fixture_store", dir.path, fs::copy_options::recursive);
  ProjectStore store(dir.path);
  CHECK(store.list() == std::vector<std::string>{"Fixture Project"});
  CHECK(store.head("Fixture Project") == kFixtureRevision);
  CHECK(store.load("Fixture Project") == testgen::fixture_project());
}

TEST_CASE("save, load and history") {
  TempDir dir;
  ProjectStore store(dir.path);
  Project p = testgen::fixture_project();
  const std::string first = store.save(p);
  CHECK(store.save(p) == first);
  CHECK(store.history(p.name).size() == 1);

  p.modified += 1000;
  p.knowledge["extra"] = DomainKnowledge{"X", {"f"}, {}};
  const std::string second = store.save(p);
  CHECK(second != first);
  CHECK(store.head(p.name) == second);
  CHECK(store.history(p.name) ==
        std::vector<RevisionEntry>{{first, 1700000123456}, {second, 1700000124456}});
  CHECK(store.load(p.name) == p);
  CHECK(store.load(p.name, first) == testgen::fixture_project());
  CHECK(store.exists(p.name));
  CHECK_FALSE(store.exists("nope"));
  CHECK(code_of([&] { store.load("nope"); }) == ErrorCode::kNotFound);
  CHECK(code_of([&] { store.load(p.name, std::string(64, 'a')); }) == ErrorCode::kNotFound);

  // Going back to earlier content appends the old id again.
  CHECK(store.save(testgen::fixture_project()) == first);
  CHECK(store.history(p.name).size() == 3);
  CHECK(store.head(p.name) == first);
}

TEST_CASE("invalid projects are refused") {
  TempDir dir;
  ProjectStore store(dir.path);
  Project p = testgen::fixture_project();
  p.name = "";
  CHECK(code_of([&] { store.save(p); }) == ErrorCode::kInvalidArgument);
  p = testgen::fixture_project();
  p.modified = p.created - 1;
  CHECK(code_of([&] { store.save(p); }) == ErrorCode::kInvalidArgument);
  p = testgen::fixture_project();
  p.cases.emplace("broken", GoalStructure("b", {{"Sn1", ElementKind::kSolution, "x", false}},
                                          {{"Sn1", "Sn1", RelationshipKind::kSupportedBy}}));
  CHECK(code_of([&] { store.save(p); }) == ErrorCode::kInvalidStructure);
  CHECK(store.list().empty());
}

TEST_CASE("tampering is detected") {
  TempDir dir;
  ProjectStore store(dir.path);
  const Project p = testgen::fixture_project();
  const std::string rev = store.save(p);
  const fs::path snapshot = dir.path / encode_name(p.name) / "revisions" / rev;
  for (const char* file : {"project.json", "cases/infusion%20pump.gsn.txt", "MANIFEST"}) {
    CAPTURE(file);
    const fs::path target = snapshot / file;
    const std::string original = slurp(target);
    std::string changed = original;
    changed[changed.size() / 2] ^= 0x01;
    std::ofstream(target, std::ios::binary) << changed;
    CHECK(code_of([&] { store.load(p.name); }) == ErrorCode::kCorruptStore);
    std::ofstream(target, std::ios::binary) << original;
    CHECK(store.load(p.name) == p);
  }
  fs::remove(snapshot / "project.json");
  CHECK(code_of([&] { store.load(p.name); }) == ErrorCode::kCorruptStore);
}

TEST_CASE("edits to the working copy do not leak into loads") {
  TempDir dir;
  ProjectStore store(dir.path);
  const Project p = testgen::fixture_project();
  store.save(p);
  std::ofstream(dir.path / encode_name(p.name) / "project.json") << "garbage";
  CHECK(store.load(p.name) == p);
}

TEST_CASE("prune") {
  TempDir dir;
  ProjectStore store(dir.path);
  Project p = testgen::fixture_project();
  std::vector<std::string> ids;
  for (int i = 0; i < 5; ++i) {
    p.modified = p.created + i;
    ids.push_back(store.save(p));
  }
  CHECK(store.prune(p.name, 2) == 3);
  CHECK(store.head(p.name) == ids[4]);
  CHECK(store.load(p.name, ids[3]).modified == p.created + 3);
  CHECK(code_of([&] { store.load(p.name, ids[2]); }) == ErrorCode::kNotFound);
  CHECK(store.history(p.name).size() == 2);
  CHECK(store.prune(p.name, 0) == 1);
  CHECK(store.history(p.name) == std::vector<RevisionEntry>{{ids[4], p.created + 4}});
  CHECK(store.load(p.name) == p);
}

TEST_CASE("random projects round-trip") {
  TempDir dir;
  ProjectStore store(dir.path);
  testgen::Rng rng(31337);
  for (int i = 0; i < 40; ++i) {
    const Project p = testgen::random_project(rng);
    CHECK(project_from_files(project_files(p)) == p);
    store.save(p);
    CHECK(store.load(p.name) == p);
  }
}

TEST_CASE("concurrent saves serialize") {
  TempDir dir;
  ProjectStore store(dir.path);
  Project base = testgen::fixture_project();
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      ProjectStore mine(dir.path);
      Project p = base;
      for (int i = 0; i < 5; ++i) {
        p.modified = p.created + t * 100 + i;
        mine.save(p);
      }
    });
  }
  for (auto& t : threads) t.join();
  const auto history = store.history(base.name);
  CHECK(history.size() == 20);
  CHECK(store.head(base.name) == history.back().id);
  for (const auto& entry : history) CHECK_NOTHROW(store.load(base.name, entry.id));
}

TEST_CASE("store root resolution") {
  CHECK(ProjectStore::resolve_root(std::string("/x")) == "/x");
  ::setenv("GSNKIT_STORE", "/from-env", 1);
  CHECK(ProjectStore::resolve_root(std::nullopt) == "/from-env");
  ::unsetenv("GSNKIT_STORE");
  CHECK(ProjectStore::resolve_root(std::nullopt) == "gsnkit-store");
}

TEST_CASE("unwritable root") {
  ProjectStore store("/proc/gsnkit-cannot-write-here");
  CHECK(code_of([&] { store.save(testgen::fixture_project()); }) == ErrorCode::kStoreUnwritable);
}
