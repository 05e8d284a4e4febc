#include "gsnkit/persistence.h"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "gsnkit/error.h"
#include "gsnkit/json_codec.h"
#include "gsnkit/prose.h"

namespace gsnkit {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kProseSuffix = ".gsn.txt";
constexpr const char* kMetadataFile = "project.json";

void check_name(const std::string& name, std::string_view what) {
  if (name.empty()) throw Error(ErrorCode::kInvalidArgument, fmt::format("{} name is empty", what));
}

void require_valid(const GoalStructure& structure, std::string_view what, const std::string& key) {
  const auto violations = validate(structure);
  if (!has_errors(violations)) return;
  for (const auto& v : violations) {
    if (v.severity == Severity::kError) {
      throw Error(ErrorCode::kInvalidStructure,
                  fmt::format("{} '{}' is invalid: {}", what, key, v.message));
    }
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, fmt::format("cannot read {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, std::string_view data) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(data.data(), static_cast<std::streamsize>(data.size())) || !out.flush()) {
      throw Error(ErrorCode::kStoreUnwritable, fmt::format("cannot write {}", path.string()));
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    throw Error(ErrorCode::kStoreUnwritable,
                fmt::format("cannot write {}: {}", path.string(), ec.message()));
  }
}

void append_file(const fs::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out || !out.write(data.data(), static_cast<std::streamsize>(data.size())) || !out.flush()) {
    throw Error(ErrorCode::kStoreUnwritable, fmt::format("cannot append to {}", path.string()));
  }
}

/// flock-based exclusive lock on <dir>/.lock for the lifetime of the object.
class WriteLock {
 public:
  explicit WriteLock(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    fd_ = ::open((dir / ".lock").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0 || ::flock(fd_, LOCK_EX) != 0) {
      if (fd_ >= 0) ::close(fd_);
      throw Error(ErrorCode::kStoreUnwritable, fmt::format("cannot lock {}", dir.string()));
    }
  }
  ~WriteLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  WriteLock(const WriteLock&) = delete;
  WriteLock& operator=(const WriteLock&) = delete;

 private:
  int fd_ = -1;
};

std::string build_manifest(const std::map<std::string, std::string>& files) {
  std::string manifest;
  for (const auto& [path, data] : files) manifest += fmt::format("{}  {}\n", sha256_hex(data), path);
  return manifest;
}

[[noreturn]] void corrupt(const std::string& what) {
  throw Error(ErrorCode::kCorruptStore, what);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

bool is_revision_id(std::string_view id) {
  return id.size() == 64 && std::all_of(id.begin(), id.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

}  // namespace

void Project::check() const {
  check_name(name, "project");
  if (modified < created) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("project '{}': modified precedes created", name));
  }
  for (const auto& [key, structure] : cases) {
    check_name(key, "case");
    require_valid(structure, "case", key);
  }
  for (const auto& [key, pattern] : patterns) {
    check_name(key, "pattern");
    require_valid(pattern.structure(), "pattern", key);
  }
  for (const auto& [key, k] : knowledge) {
    check_name(key, "knowledge");
    k.check(true);
  }
  for (const auto& [key, _] : reports) check_name(key, "report");
}

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int size = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &size, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kInvalidArgument, "SHA-256 failed");
  }
  std::string out;
  out.reserve(size * 2);
  for (unsigned int i = 0; i < size; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string encode_name(std::string_view name) {
  std::string out;
  for (std::size_t i = 0; i < name.size(); ++i) {
    const auto c = static_cast<unsigned char>(name[i]);
    const bool plain = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                       c == '_' || c == '-' || (c == '.' && i > 0);
    out += plain ? std::string(1, static_cast<char>(c)) : fmt::format("%{:02X}", c);
  }
  return out;
}

std::string decode_name(std::string_view encoded) {
  std::string out;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    if (encoded[i] != '%') {
      out += encoded[i];
      continue;
    }
    if (i + 2 >= encoded.size()) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("bad escape in '{}'", encoded));
    }
    const std::string hex(encoded.substr(i + 1, 2));
    char* end = nullptr;
    const long value = std::strtol(hex.c_str(), &end, 16);
    if (end != hex.c_str() + 2) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("bad escape in '{}'", encoded));
    }
    out += static_cast<char>(value);
    i += 2;
  }
  return out;
}

std::map<std::string, std::string> project_files(const Project& project) {
  project.check();
  std::map<std::string, std::string> files;
  Json knowledge = Json::object();
  for (const auto& [key, k] : project.knowledge) knowledge[key] = to_json(k);
  Json reports = Json::object();
  for (const auto& [key, r] : project.reports) reports[key] = to_json(r);
  Json cases = Json::array();
  for (const auto& [key, structure] : project.cases) {
    cases.push_back(key);
    files.emplace(fmt::format("cases/{}{}", encode_name(key), kProseSuffix),
                  serialize(structure).str());
  }
  Json patterns = Json::array();
  for (const auto& [key, pattern] : project.patterns) {
    patterns.push_back(key);
    files.emplace(fmt::format("patterns/{}{}", encode_name(key), kProseSuffix),
                  serialize(pattern).str());
  }
  const Json meta = {{"name", project.name},         {"created", project.created},
                     {"modified", project.modified}, {"cases", std::move(cases)},
                     {"patterns", std::move(patterns)}, {"knowledge", std::move(knowledge)},
                     {"reports", std::move(reports)}};
  files.emplace(kMetadataFile, meta.dump(2) + "\n");
  return files;
}

Project project_from_files(const std::map<std::string, std::string>& files) {
  auto it = files.find(kMetadataFile);
  if (it == files.end()) corrupt("project.json missing");
  try {
    const Json meta = Json::parse(it->second);
    Project project;
    project.name = meta.at("name").get<std::string>();
    project.created = meta.at("created").get<std::int64_t>();
    project.modified = meta.at("modified").get<std::int64_t>();
    auto prose = [&](const std::string& dir, const std::string& key) -> ParseResult {
      const std::string path = fmt::format("{}/{}{}", dir, encode_name(key), kProseSuffix);
      auto f = files.find(path);
      if (f == files.end()) corrupt(fmt::format("{} missing", path));
      ParseResult parsed = parse(f->second);
      if (!parsed.ok()) corrupt(fmt::format("{} does not parse", path));
      return parsed;
    };
    for (const auto& key : meta.at("cases")) {
      const auto name = key.get<std::string>();
      project.cases.emplace(name, prose("cases", name).structure);
    }
    for (const auto& key : meta.at("patterns")) {
      const auto name = key.get<std::string>();
      project.patterns.emplace(name, prose("patterns", name).pattern());
    }
    for (const auto& [key, value] : meta.at("knowledge").items()) {
      project.knowledge.emplace(key, knowledge_from_json(value));
    }
    for (const auto& [key, value] : meta.at("reports").items()) {
      project.reports.emplace(key, evaluation_report_from_json(value));
    }
    return project;
  } catch (const Json::exception& e) {
    corrupt(fmt::format("project.json: {}", e.what()));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptStore) throw;
    corrupt(e.what());
  }
}

ProjectStore::ProjectStore(fs::path root) : root_(std::move(root)) {}

fs::path ProjectStore::resolve_root(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("GSNKIT_STORE"); env && *env) return env;
  return "gsnkit-store";
}

fs::path ProjectStore::project_dir(const std::string& name) const {
  check_name(name, "project");
  return root_ / encode_name(name);
}

std::string ProjectStore::save(const Project& project) const {
  const auto files = project_files(project);
  const std::string manifest = build_manifest(files);
  const std::string revision = sha256_hex(manifest);
  const fs::path dir = project_dir(project.name);

  WriteLock lock(dir);
  const fs::path snapshot = dir / "revisions" / revision;
  std::error_code ec;
  if (!fs::exists(snapshot / "MANIFEST")) {
    const fs::path staging = dir / "revisions" / (revision + ".staging");
    fs::remove_all(staging, ec);
    for (const auto& [path, data] : files) write_file(staging / path, data);
    write_file(staging / "MANIFEST", manifest);
    fs::remove_all(snapshot, ec);
    fs::rename(staging, snapshot, ec);
    if (ec) {
      throw Error(ErrorCode::kStoreUnwritable,
                  fmt::format("cannot store revision {}: {}", revision, ec.message()));
    }
  }

  const auto current = head(project.name);
  if (current != revision) {
    // Working copy: replace the prose directories wholesale.
    fs::remove_all(dir / "cases", ec);
    fs::remove_all(dir / "patterns", ec);
    for (const auto& [path, data] : files) write_file(dir / path, data);
    append_file(dir / "revisions.log", fmt::format("{} {}\n", revision, project.modified));
    write_file(dir / "HEAD", revision + "\n");
  }
  return revision;
}

std::optional<std::string> ProjectStore::head(const std::string& name) const {
  const fs::path path = project_dir(name) / "HEAD";
  if (!fs::exists(path)) return std::nullopt;
  std::string id = read_file(path);
  while (!id.empty() && (id.back() == '\n' || id.back() == '\r')) id.pop_back();
  return id;
}

bool ProjectStore::exists(const std::string& name) const { return head(name).has_value(); }

Project ProjectStore::load(const std::string& name, const std::optional<std::string>& revision) const {
  std::string id;
  if (revision && !revision->empty()) {
    id = *revision;
  } else {
    auto current = head(name);
    if (!current) throw Error(ErrorCode::kNotFound, fmt::format("no project named '{}'", name));
    id = *current;
  }
  if (!is_revision_id(id)) {
    throw Error(ErrorCode::kNotFound, fmt::format("'{}' is not a revision id", id));
  }
  const fs::path snapshot = project_dir(name) / "revisions" / id;
  if (!fs::exists(snapshot / "MANIFEST")) {
    throw Error(ErrorCode::kNotFound, fmt::format("project '{}' has no revision {}", name, id));
  }
  const std::string manifest = read_file(snapshot / "MANIFEST");
  if (sha256_hex(manifest) != id) corrupt(fmt::format("revision {}: MANIFEST hash mismatch", id));

  std::map<std::string, std::string> files;
  for (const auto& line : split_lines(manifest)) {
    if (line.size() < 67 || line.compare(64, 2, "  ") != 0) {
      corrupt(fmt::format("revision {}: malformed MANIFEST line", id));
    }
    const std::string expected = line.substr(0, 64);
    const std::string path = line.substr(66);
    if (path.find("..") != std::string::npos || path.front() == '/') {
      corrupt(fmt::format("revision {}: bad path {}", id, path));
    }
    std::string data;
    try {
      data = read_file(snapshot / path);
    } catch (const Error&) {
      corrupt(fmt::format("revision {}: {} missing", id, path));
    }
    if (sha256_hex(data) != expected) corrupt(fmt::format("revision {}: {} hash mismatch", id, path));
    files.emplace(path, std::move(data));
  }
  Project project = project_from_files(files);
  if (project.name != name) corrupt(fmt::format("revision {} belongs to '{}'", id, project.name));
  return project;
}

std::vector<std::string> ProjectStore::list() const {
  std::vector<std::string> out;
  std::error_code ec;
  if (!fs::is_directory(root_, ec)) return out;
  for (const auto& item : fs::directory_iterator(root_, ec)) {
    if (!item.is_directory() || !fs::exists(item.path() / "HEAD")) continue;
    try {
      out.push_back(decode_name(item.path().filename().string()));
    } catch (const Error&) {
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<RevisionEntry> ProjectStore::history(const std::string& name) const {
  const fs::path log = project_dir(name) / "revisions.log";
  if (!fs::exists(log)) throw Error(ErrorCode::kNotFound, fmt::format("no project named '{}'", name));
  std::vector<RevisionEntry> out;
  for (const auto& line : split_lines(read_file(log))) {
    const auto space = line.find(' ');
    RevisionEntry entry;
    entry.id = line.substr(0, space);
    if (space != std::string::npos) entry.modified = std::strtoll(line.c_str() + space + 1, nullptr, 10);
    out.push_back(std::move(entry));
  }
  return out;
}

std::size_t ProjectStore::prune(const std::string& name, std::size_t keep) const {
  const fs::path dir = project_dir(name);
  const auto entries = history(name);
  WriteLock lock(dir);
  std::set<std::string> kept;
  if (auto current = head(name)) kept.insert(*current);
  std::set<std::string> recent;
  for (auto it = entries.rbegin(); it != entries.rend() && recent.size() < keep; ++it) {
    recent.insert(it->id);
  }
  kept.insert(recent.begin(), recent.end());
  std::size_t removed = 0;
  std::set<std::string> seen;
  std::string log;
  for (const auto& entry : entries) {
    if (kept.count(entry.id)) {
      log += fmt::format("{} {}\n", entry.id, entry.modified);
    } else if (seen.insert(entry.id).second) {
      std::error_code ec;
      fs::remove_all(dir / "revisions" / entry.id, ec);
      ++removed;
    }
  }
  write_file(dir / "revisions.log", log);
  return removed;
}

}  // namespace gsnkit
