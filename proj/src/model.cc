#include "gsnkit/model.h"

#include <algorithm>
#include <charconv>
#include <map>
#include <unordered_map>

#include <fmt/format.h>

#include "gsnkit/error.h"

namespace gsnkit {

std::string_view to_string(ElementKind kind) {
  switch (kind) {
    case ElementKind::kGoal: return "Goal";
    case ElementKind::kStrategy: return "Strategy";
    case ElementKind::kSolution: return "Solution";
    case ElementKind::kContext: return "Context";
    case ElementKind::kAssumption: return "Assumption";
    case ElementKind::kJustification: return "Justification";
  }
  return "?";
}

std::string_view to_string(RelationshipKind kind) {
  return kind == RelationshipKind::kSupportedBy ? "SupportedBy" : "InContextOf";
}

std::optional<ElementKind> element_kind_from_string(std::string_view name) {
  for (ElementKind kind : kAllElementKinds) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

std::optional<RelationshipKind> relationship_kind_from_string(std::string_view name) {
  for (RelationshipKind kind : kAllRelationshipKinds) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(Severity severity) {
  return severity == Severity::kError ? "error" : "warning";
}

std::string_view to_string(ViolationCode code) {
  switch (code) {
    case ViolationCode::kInvalidName: return "InvalidName";
    case ViolationCode::kEmptyId: return "EmptyId";
    case ViolationCode::kInvalidId: return "InvalidId";
    case ViolationCode::kDuplicateId: return "DuplicateId";
    case ViolationCode::kEmptyStatement: return "EmptyStatement";
    case ViolationCode::kIllegalUndeveloped: return "IllegalUndeveloped";
    case ViolationCode::kSelfLoop: return "SelfLoop";
    case ViolationCode::kDanglingEndpoint: return "DanglingEndpoint";
    case ViolationCode::kDuplicateRelationship: return "DuplicateRelationship";
    case ViolationCode::kIllegalSupportedBySource: return "IllegalSupportedBySource";
    case ViolationCode::kIllegalSupportedByTarget: return "IllegalSupportedByTarget";
    case ViolationCode::kIllegalInContextOfSource: return "IllegalInContextOfSource";
    case ViolationCode::kIllegalInContextOfTarget: return "IllegalInContextOfTarget";
    case ViolationCode::kAcyclicityViolation: return "AcyclicityViolation";
    case ViolationCode::kMissingRoot: return "MissingRoot";
    case ViolationCode::kMultipleRoots: return "MultipleRoots";
    case ViolationCode::kUnreachable: return "Unreachable";
    case ViolationCode::kUndevelopedWithChildren: return "UndevelopedWithChildren";
  }
  return "?";
}

bool may_be_undeveloped(ElementKind kind) {
  return kind == ElementKind::kGoal || kind == ElementKind::kStrategy;
}

namespace {

bool is_argument_node(ElementKind kind) {
  return kind == ElementKind::kGoal || kind == ElementKind::kStrategy;
}

bool is_contextual(ElementKind kind) {
  return kind == ElementKind::kContext || kind == ElementKind::kAssumption ||
         kind == ElementKind::kJustification;
}

bool supported_by_target_ok(ElementKind source, ElementKind target) {
  if (source == ElementKind::kGoal) {
    return target == ElementKind::kGoal || target == ElementKind::kStrategy ||
           target == ElementKind::kSolution;
  }
  if (source == ElementKind::kStrategy) return target == ElementKind::kGoal;
  return false;
}

bool is_blank(std::string_view text) {
  return text.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

bool is_valid_name(std::string_view name) {
  if (name.empty()) return true;
  if (name.front() == ' ' || name.back() == ' ') return false;
  return std::none_of(name.begin(), name.end(), [](char c) {
    return c == '#' || static_cast<unsigned char>(c) < 0x20 || c == 0x7f;
  });
}

bool is_placeholder_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
         c == '_' || c == ' ' || c == '-';
}

/// Tarjan's strongly connected components over the SupportedBy subgraph.
class CycleFinder {
 public:
  explicit CycleFinder(const std::map<std::string, std::vector<std::string>>& edges)
      : edges_(edges) {}

  std::vector<std::vector<std::string>> run() {
    for (const auto& [node, _] : edges_) {
      if (!index_.count(node)) visit(node);
    }
    return cycles_;
  }

 private:
  void visit(const std::string& node) {
    index_[node] = low_[node] = counter_++;
    stack_.push_back(node);
    on_stack_[node] = true;
    auto it = edges_.find(node);
    if (it != edges_.end()) {
      for (const std::string& next : it->second) {
        if (!index_.count(next)) {
          visit(next);
          low_[node] = std::min(low_[node], low_[next]);
        } else if (on_stack_[next]) {
          low_[node] = std::min(low_[node], index_[next]);
        }
      }
    }
    if (low_[node] == index_[node]) {
      std::vector<std::string> component;
      std::string member;
      do {
        member = stack_.back();
        stack_.pop_back();
        on_stack_[member] = false;
        component.push_back(member);
      } while (member != node);
      if (component.size() > 1) {
        std::sort(component.begin(), component.end());
        cycles_.push_back(std::move(component));
      }
    }
  }

  const std::map<std::string, std::vector<std::string>>& edges_;
  std::unordered_map<std::string, int> index_;
  std::unordered_map<std::string, int> low_;
  std::unordered_map<std::string, bool> on_stack_;
  std::vector<std::string> stack_;
  std::vector<std::vector<std::string>> cycles_;
  int counter_ = 0;
};

}  // namespace

bool is_legal_relationship(RelationshipKind kind, ElementKind source, ElementKind target) {
  if (kind == RelationshipKind::kSupportedBy) return supported_by_target_ok(source, target);
  return is_argument_node(source) && is_contextual(target);
}

bool is_valid_id(std::string_view id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '.' || c == '-';
  });
}

GoalStructure::GoalStructure(std::string name, std::vector<GsnElement> elements,
                             std::vector<GsnRelationship> relationships)
    : name_(std::move(name)),
      elements_(std::move(elements)),
      relationships_(std::move(relationships)) {
  std::stable_sort(elements_.begin(), elements_.end(),
                   [](const GsnElement& a, const GsnElement& b) { return a.id < b.id; });
  std::sort(relationships_.begin(), relationships_.end());
}

const GsnElement* GoalStructure::find(std::string_view id) const {
  auto it = std::lower_bound(elements_.begin(), elements_.end(), id,
                             [](const GsnElement& e, std::string_view key) { return e.id < key; });
  if (it == elements_.end() || it->id != id) return nullptr;
  return &*it;
}

GoalStructure GoalStructure::with_name(std::string name) const {
  GoalStructure copy = *this;
  copy.name_ = std::move(name);
  return copy;
}

std::vector<Violation> validate(const GoalStructure& structure) {
  std::vector<Violation> out;
  auto report = [&out](ViolationCode code, std::vector<std::string> ids, std::string message,
                       Severity severity = Severity::kError) {
    out.push_back(Violation{code, severity, std::move(ids), std::move(message)});
  };

  if (!is_valid_name(structure.name())) {
    report(ViolationCode::kInvalidName, {},
           "structure name must be a single line without '#' or surrounding spaces");
  }

  std::map<std::string, const GsnElement*> by_id;
  for (const GsnElement& e : structure.elements()) {
    if (e.id.empty()) {
      report(ViolationCode::kEmptyId, {}, fmt::format("{} with an empty id", to_string(e.kind)));
      continue;
    }
    if (!is_valid_id(e.id)) {
      report(ViolationCode::kInvalidId, {e.id},
             fmt::format("id '{}' contains characters outside [A-Za-z0-9_.-]", e.id));
    }
    if (!by_id.emplace(e.id, &e).second) {
      report(ViolationCode::kDuplicateId, {e.id}, fmt::format("duplicate id '{}'", e.id));
    }
    if (is_blank(e.statement)) {
      report(ViolationCode::kEmptyStatement, {e.id},
             fmt::format("{} '{}' has an empty statement", to_string(e.kind), e.id));
    }
    if (e.undeveloped && !may_be_undeveloped(e.kind)) {
      report(ViolationCode::kIllegalUndeveloped, {e.id},
             fmt::format("the Undeveloped decorator cannot be applied to {} '{}'",
                         to_string(e.kind), e.id));
    }
  }

  std::map<std::string, std::vector<std::string>> supported_by;
  std::map<std::string, std::vector<std::string>> adjacency;
  std::set<std::string> supported_targets;
  const GsnRelationship* previous = nullptr;
  for (const GsnRelationship& r : structure.relationships()) {
    const bool duplicate = previous && *previous == r;
    previous = &r;
    if (duplicate) {
      report(ViolationCode::kDuplicateRelationship, {r.source, r.target},
             fmt::format("{}({}, {}) is declared more than once", to_string(r.kind), r.source,
                         r.target));
      continue;
    }
    if (r.source == r.target) {
      report(ViolationCode::kSelfLoop, {r.source, r.target},
             fmt::format("{}({}, {}) relates an element to itself", to_string(r.kind), r.source,
                         r.target));
      continue;
    }
    auto src = by_id.find(r.source);
    auto dst = by_id.find(r.target);
    if (src == by_id.end() || dst == by_id.end()) {
      report(ViolationCode::kDanglingEndpoint, {r.source, r.target},
             fmt::format("{}({}, {}) references an undeclared element", to_string(r.kind),
                         r.source, r.target));
      continue;
    }
    const ElementKind sk = src->second->kind;
    const ElementKind tk = dst->second->kind;
    if (r.kind == RelationshipKind::kSupportedBy) {
      if (!is_argument_node(sk)) {
        report(ViolationCode::kIllegalSupportedBySource, {r.source, r.target},
               fmt::format("a {} cannot be supported by anything", to_string(sk)));
      } else if (!supported_by_target_ok(sk, tk)) {
        report(ViolationCode::kIllegalSupportedByTarget, {r.source, r.target},
               fmt::format("a {} cannot be SupportedBy a {}", to_string(sk), to_string(tk)));
      }
      supported_by[r.source].push_back(r.target);
      supported_targets.insert(r.target);
    } else {
      if (!is_argument_node(sk)) {
        report(ViolationCode::kIllegalInContextOfSource, {r.source, r.target},
               fmt::format("a {} cannot be InContextOf anything", to_string(sk)));
      } else if (!is_contextual(tk)) {
        report(ViolationCode::kIllegalInContextOfTarget, {r.source, r.target},
               fmt::format("a {} cannot be InContextOf a {}", to_string(sk), to_string(tk)));
      }
    }
    adjacency[r.source].push_back(r.target);
  }

  for (auto& cycle : CycleFinder(supported_by).run()) {
    std::string joined;
    for (const auto& id : cycle) joined += (joined.empty() ? "" : ", ") + id;
    report(ViolationCode::kAcyclicityViolation, std::move(cycle),
           fmt::format("SupportedBy cycle through {}", joined));
  }

  std::vector<std::string> roots;
  for (const auto& [id, e] : by_id) {
    if (e->kind == ElementKind::kGoal && !supported_targets.count(id)) roots.push_back(id);
  }
  if (roots.empty()) {
    report(ViolationCode::kMissingRoot, {}, "no goal is free of incoming SupportedBy links");
  } else if (roots.size() > 1) {
    report(ViolationCode::kMultipleRoots, roots,
           fmt::format("{} candidate root goals; exactly one is required", roots.size()));
  }

  std::set<std::string> reached(roots.begin(), roots.end());
  std::vector<std::string> frontier(roots.begin(), roots.end());
  while (!frontier.empty()) {
    std::string node = std::move(frontier.back());
    frontier.pop_back();
    auto it = adjacency.find(node);
    if (it == adjacency.end()) continue;
    for (const std::string& next : it->second) {
      if (reached.insert(next).second) frontier.push_back(next);
    }
  }
  if (!roots.empty()) {
    for (const auto& [id, _] : by_id) {
      if (!reached.count(id)) {
        report(ViolationCode::kUnreachable, {id},
               fmt::format("'{}' is not reachable from the root goal", id));
      }
    }
  }

  for (const auto& [id, e] : by_id) {
    if (e->undeveloped && supported_by.count(id)) {
      report(ViolationCode::kUndevelopedWithChildren, {id},
             fmt::format("'{}' is marked undeveloped but has supporting elements", id),
             Severity::kWarning);
    }
  }

  std::sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) {
    if (a.code != b.code) return a.code < b.code;
    if (a.ids != b.ids) return a.ids < b.ids;
    return a.message < b.message;
  });
  return out;
}

bool has_errors(std::span<const Violation> violations) {
  return std::any_of(violations.begin(), violations.end(),
                     [](const Violation& v) { return v.severity == Severity::kError; });
}

bool is_valid(const GoalStructure& structure) { return !has_errors(validate(structure)); }

std::vector<std::string> scan_placeholders(std::string_view statement) {
  std::vector<std::string> names;
  std::size_t pos = 0;
  while (pos < statement.size()) {
    const char c = statement[pos];
    if (c == '}') {
      throw Error(ErrorCode::kMalformedPlaceholder,
                  fmt::format("unmatched '}}' at offset {} in \"{}\"", pos, statement));
    }
    if (c != '{') {
      ++pos;
      continue;
    }
    const std::size_t close = statement.find('}', pos + 1);
    if (close == std::string_view::npos) {
      throw Error(ErrorCode::kMalformedPlaceholder,
                  fmt::format("unmatched '{{' at offset {} in \"{}\"", pos, statement));
    }
    std::string_view name = statement.substr(pos + 1, close - pos - 1);
    if (name.empty() || !std::all_of(name.begin(), name.end(), is_placeholder_char)) {
      throw Error(ErrorCode::kMalformedPlaceholder,
                  fmt::format("invalid placeholder name '{{{}}}'", name));
    }
    names.emplace_back(name);
    pos = close + 1;
  }
  return names;
}

std::set<std::string> extract_placeholders(const GoalStructure& structure) {
  std::set<std::string> names;
  for (const GsnElement& e : structure.elements()) {
    for (std::string& name : scan_placeholders(e.statement)) names.insert(std::move(name));
  }
  return names;
}

StructureStats statistics(const GoalStructure& structure) {
  StructureStats stats;
  stats.elements = structure.elements().size();
  stats.relationships = structure.relationships().size();
  for (const GsnElement& e : structure.elements()) {
    ++stats.per_kind[static_cast<std::size_t>(e.kind)];
    if (e.undeveloped) ++stats.undeveloped;
  }
  for (const GsnRelationship& r : structure.relationships()) {
    ++stats.per_relationship_kind[static_cast<std::size_t>(r.kind)];
  }
  stats.placeholders = extract_placeholders(structure).size();
  return stats;
}

PatternDocument::PatternDocument(GoalStructure structure)
    : structure_(std::move(structure)), placeholders_(extract_placeholders(structure_)) {}

std::string_view id_prefix(ElementKind kind) {
  switch (kind) {
    case ElementKind::kGoal: return "G";
    case ElementKind::kStrategy: return "S";
    case ElementKind::kSolution: return "Sn";
    case ElementKind::kContext: return "C";
    case ElementKind::kAssumption: return "A";
    case ElementKind::kJustification: return "J";
  }
  return "E";
}

std::string next_element_id(const GoalStructure& structure, ElementKind kind) {
  const std::string_view prefix = id_prefix(kind);
  unsigned long highest = 0;
  for (const GsnElement& e : structure.elements()) {
    std::string_view id = e.id;
    if (id.size() <= prefix.size() || id.substr(0, prefix.size()) != prefix) continue;
    std::string_view digits = id.substr(prefix.size());
    unsigned long value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec == std::errc() && ptr == digits.data() + digits.size()) {
      highest = std::max(highest, value);
    }
  }
  // Skip over ids taken by other spellings (e.g. "G01").
  for (unsigned long n = highest + 1;; ++n) {
    std::string candidate = fmt::format("{}{}", prefix, n);
    if (!structure.find(candidate)) return candidate;
  }
}

std::optional<std::string> root_id(const GoalStructure& structure) {
  std::set<std::string_view> targets;
  for (const GsnRelationship& r : structure.relationships()) {
    if (r.kind == RelationshipKind::kSupportedBy) targets.insert(r.target);
  }
  std::optional<std::string> root;
  for (const GsnElement& e : structure.elements()) {
    if (e.kind != ElementKind::kGoal || targets.count(e.id)) continue;
    if (root) return std::nullopt;
    root = e.id;
  }
  return root;
}

}  // namespace gsnkit
