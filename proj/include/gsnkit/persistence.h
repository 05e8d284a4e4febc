#pragma once

/// @file persistence.h
/// Local project store with content-addressed revision history.
///
/// Layout under the store root, one directory per project (names
/// percent-encoded):
///
///     <project>/
///       project.json              metadata, knowledge, reports
///       cases/<case>.gsn.txt      canonical prose
///       patterns/<pattern>.gsn.txt
///       HEAD                      current revision id
///       revisions.log             "<revision> <modified-ms>" per save, append-only
///       revisions/<revision>/     MANIFEST plus a copy of every file above
///       .lock                     advisory write lock
///
/// MANIFEST lists "<sha256>  <relative path>" per file in path order; the
/// revision id is the SHA-256 of MANIFEST. The working copy at the top is
/// for people and diff tools; loads read the revision snapshot.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gsnkit/detection.h"
#include "gsnkit/instantiation.h"
#include "gsnkit/model.h"

namespace gsnkit {

struct Project {
  std::string name;
  /// Milliseconds since the Unix epoch.
  std::int64_t created = 0;
  std::int64_t modified = 0;
  std::map<std::string, GoalStructure> cases;
  std::map<std::string, PatternDocument> patterns;
  std::map<std::string, DomainKnowledge> knowledge;
  std::map<std::string, EvaluationReport> reports;

  /// Non-empty names, modified >= created, every case and pattern free of
  /// Error violations. Throws Error(kInvalidArgument) or Error(kInvalidStructure).
  void check() const;

  friend bool operator==(const Project&, const Project&) = default;
};

std::int64_t now_ms();

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);

/// Bytes outside [A-Za-z0-9_-] (and a leading '.') become %XX.
std::string encode_name(std::string_view name);
/// Throws Error(kInvalidArgument) on malformed escapes.
std::string decode_name(std::string_view encoded);

struct RevisionEntry {
  std::string id;
  std::int64_t modified = 0;

  friend bool operator==(const RevisionEntry&, const RevisionEntry&) = default;
};

class ProjectStore {
 public:
  explicit ProjectStore(std::filesystem::path root);

  /// `flag` if set, else $GSNKIT_STORE, else ./gsnkit-store.
  static std::filesystem::path resolve_root(const std::optional<std::string>& flag);

  const std::filesystem::path& root() const { return root_; }

  /// Writes a revision and moves HEAD to it. Saving unchanged content
  /// returns the same id and adds nothing. Throws Error(kStoreUnwritable)
  /// plus whatever Project::check throws.
  std::string save(const Project& project) const;

  /// Latest revision when `revision` is empty. Throws Error(kNotFound) and
  /// Error(kCorruptStore) when a hash does not match.
  Project load(const std::string& name, const std::optional<std::string>& revision = {}) const;

  bool exists(const std::string& name) const;
  std::vector<std::string> list() const;
  /// Oldest first, as recorded in revisions.log.
  std::vector<RevisionEntry> history(const std::string& name) const;
  std::optional<std::string> head(const std::string& name) const;

  /// Deletes every revision except HEAD and the `keep` most recent ones;
  /// returns how many were removed. The only operation that drops history.
  std::size_t prune(const std::string& name, std::size_t keep) const;

 private:
  std::filesystem::path project_dir(const std::string& name) const;

  std::filesystem::path root_;
};

/// The files a revision stores for `project`, keyed by relative path.
std::map<std::string, std::string> project_files(const Project& project);
/// Inverse of project_files; throws Error(kCorruptStore) on unreadable data.
Project project_from_files(const std::map<std::string, std::string>& files);

}  // namespace gsnkit
