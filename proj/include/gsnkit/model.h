#pragma once

/// @file model.h
/// GSN goal structures: elements, relationships, decorators and the
/// placeholder-bearing pattern extension, plus well-formedness checks.

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gsnkit {

enum class ElementKind { kGoal, kStrategy, kSolution, kContext, kAssumption, kJustification };

inline constexpr std::array<ElementKind, 6> kAllElementKinds = {
    ElementKind::kGoal,    ElementKind::kStrategy,   ElementKind::kSolution,
    ElementKind::kContext, ElementKind::kAssumption, ElementKind::kJustification};

enum class RelationshipKind { kSupportedBy, kInContextOf };

inline constexpr std::array<RelationshipKind, 2> kAllRelationshipKinds = {
    RelationshipKind::kSupportedBy, RelationshipKind::kInContextOf};

/// Keyword used in the formalized prose ("Goal", "SupportedBy", ...).
std::string_view to_string(ElementKind kind);
std::string_view to_string(RelationshipKind kind);
std::optional<ElementKind> element_kind_from_string(std::string_view name);
std::optional<RelationshipKind> relationship_kind_from_string(std::string_view name);

/// Only goals and strategies may carry the Undeveloped decorator.
bool may_be_undeveloped(ElementKind kind);

/// The relationship rule table.
bool is_legal_relationship(RelationshipKind kind, ElementKind source, ElementKind target);

struct GsnElement {
  std::string id;
  ElementKind kind = ElementKind::kGoal;
  std::string statement;
  bool undeveloped = false;

  friend auto operator<=>(const GsnElement&, const GsnElement&) = default;
};

struct GsnRelationship {
  std::string source;
  std::string target;
  RelationshipKind kind = RelationshipKind::kSupportedBy;

  friend auto operator<=>(const GsnRelationship&, const GsnRelationship&) = default;
};

/// Immutable goal structure value. Elements are kept sorted by id and
/// relationships by (source, target, kind), so equality is structural and
/// independent of insertion order. Construction never rejects input; use
/// validate() to check the notation rules.
class GoalStructure {
 public:
  GoalStructure() = default;
  GoalStructure(std::string name, std::vector<GsnElement> elements,
                std::vector<GsnRelationship> relationships);

  const std::string& name() const { return name_; }
  std::span<const GsnElement> elements() const { return elements_; }
  std::span<const GsnRelationship> relationships() const { return relationships_; }

  /// First element with the given id, or nullptr.
  const GsnElement* find(std::string_view id) const;

  GoalStructure with_name(std::string name) const;

  friend bool operator==(const GoalStructure&, const GoalStructure&) = default;

 private:
  std::string name_;
  std::vector<GsnElement> elements_;
  std::vector<GsnRelationship> relationships_;
};

enum class Severity { kError, kWarning };

std::string_view to_string(Severity severity);

/// Declaration order is the normalization order of validate() output.
enum class ViolationCode {
  kInvalidName,
  kEmptyId,
  kInvalidId,
  kDuplicateId,
  kEmptyStatement,
  kIllegalUndeveloped,
  kSelfLoop,
  kDanglingEndpoint,
  kDuplicateRelationship,
  kIllegalSupportedBySource,
  kIllegalSupportedByTarget,
  kIllegalInContextOfSource,
  kIllegalInContextOfTarget,
  kAcyclicityViolation,
  kMissingRoot,
  kMultipleRoots,
  kUnreachable,
  kUndevelopedWithChildren,
};

std::string_view to_string(ViolationCode code);

struct Violation {
  ViolationCode code;
  Severity severity = Severity::kError;
  std::vector<std::string> ids;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Checks every notation rule. Violations are data: the result is sorted
/// by code, then ids, and is empty iff the structure is well formed.
std::vector<Violation> validate(const GoalStructure& structure);

/// True when validate() reports no Error-severity violation.
bool is_valid(const GoalStructure& structure);
bool has_errors(std::span<const Violation> violations);

/// Ids must match [A-Za-z0-9_.-]+ so they survive the prose grammar.
bool is_valid_id(std::string_view id);

/// Placeholder names appearing as `{name}` in one statement, in order of
/// appearance (duplicates kept). Throws Error(kMalformedPlaceholder) on an
/// unmatched brace or a name outside [A-Za-z0-9_ -]+.
std::vector<std::string> scan_placeholders(std::string_view statement);

/// Distinct placeholder names across every statement of the structure.
std::set<std::string> extract_placeholders(const GoalStructure& structure);

struct StructureStats {
  std::size_t elements = 0;
  std::size_t relationships = 0;
  std::array<std::size_t, 6> per_kind{};
  std::array<std::size_t, 2> per_relationship_kind{};
  std::size_t placeholders = 0;
  std::size_t undeveloped = 0;

  std::size_t count(ElementKind kind) const { return per_kind[static_cast<std::size_t>(kind)]; }
  std::size_t count(RelationshipKind kind) const {
    return per_relationship_kind[static_cast<std::size_t>(kind)];
  }

  friend bool operator==(const StructureStats&, const StructureStats&) = default;
};

StructureStats statistics(const GoalStructure& structure);

/// A goal structure whose statements contain `{name}` placeholders.
class PatternDocument {
 public:
  PatternDocument() = default;
  /// Derives the placeholder set; throws Error(kMalformedPlaceholder).
  explicit PatternDocument(GoalStructure structure);

  const GoalStructure& structure() const { return structure_; }
  const std::set<std::string>& placeholders() const { return placeholders_; }
  const std::string& name() const { return structure_.name(); }

  friend bool operator==(const PatternDocument&, const PatternDocument&) = default;

 private:
  GoalStructure structure_;
  std::set<std::string> placeholders_;
};

/// Editor helper: next free id for a kind, using the conventional prefixes
/// (G, S, Sn, C, A, J) followed by one more than the largest numeric suffix
/// already in use for that prefix.
std::string next_element_id(const GoalStructure& structure, ElementKind kind);
std::string_view id_prefix(ElementKind kind);

/// Id of the single root goal, if the structure has exactly one.
std::optional<std::string> root_id(const GoalStructure& structure);

}  // namespace gsnkit
