#include "gsnkit/prose.h"

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>

#include <fmt/format.h>

#include "gsnkit/error.h"

namespace gsnkit {

std::string_view to_string(DocumentKind kind) {
  return kind == DocumentKind::kPattern ? "Pattern" : "AssuranceCase";
}

std::string FormalizedText::str() const {
  std::string out;
  for (const std::string& line : lines) {
    out += line;
    out += '\n';
  }
  return out;
}

std::string FormalizedText::body() const {
  std::string out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    out += lines[i];
    out += '\n';
  }
  return out;
}

std::string quote_statement(std::string_view statement) {
  std::string out = "\"";
  for (char c : statement) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

std::vector<const GsnElement*> canonical_element_order(const GoalStructure& structure) {
  std::map<std::string_view, std::set<std::string_view>> children;
  for (const GsnRelationship& r : structure.relationships()) {
    children[r.source].insert(r.target);
  }
  std::vector<const GsnElement*> order;
  std::set<std::string_view> seen;
  std::deque<const GsnElement*> queue;
  if (auto root = root_id(structure)) {
    const GsnElement* e = structure.find(*root);
    seen.insert(e->id);
    queue.push_back(e);
  }
  while (!queue.empty()) {
    const GsnElement* e = queue.front();
    queue.pop_front();
    order.push_back(e);
    auto it = children.find(e->id);
    if (it == children.end()) continue;
    for (std::string_view child : it->second) {
      const GsnElement* next = structure.find(child);
      if (next && seen.insert(next->id).second) queue.push_back(next);
    }
  }
  for (const GsnElement& e : structure.elements()) {
    if (!seen.count(e.id)) order.push_back(&e);
  }
  return order;
}

FormalizedText serialize(const GoalStructure& structure, DocumentKind kind) {
  auto violations = validate(structure);
  if (has_errors(violations)) {
    const auto& first = *std::find_if(violations.begin(), violations.end(), [](const Violation& v) {
      return v.severity == Severity::kError;
    });
    throw Error(ErrorCode::kInvalidStructure,
                fmt::format("cannot serialize an invalid structure: {}: {}", to_string(first.code),
                            first.message));
  }

  FormalizedText text;
  text.kind = kind;
  text.lines.push_back(fmt::format("{}: {}", to_string(kind), structure.name()));
  if (structure.name().empty()) text.lines.back().pop_back();

  const auto order = canonical_element_order(structure);
  for (const GsnElement* e : order) {
    text.lines.push_back(
        fmt::format("{}({}, {})", to_string(e->kind), e->id, quote_statement(e->statement)));
    if (e->undeveloped) text.lines.push_back(fmt::format("Undeveloped({})", e->id));
  }

  std::map<std::string_view, std::vector<const GsnRelationship*>> outgoing;
  for (const GsnRelationship& r : structure.relationships()) outgoing[r.source].push_back(&r);
  for (const GsnElement* e : order) {
    auto it = outgoing.find(e->id);
    if (it == outgoing.end()) continue;
    auto rels = it->second;
    std::sort(rels.begin(), rels.end(), [](const GsnRelationship* a, const GsnRelationship* b) {
      if (a->target != b->target) return a->target < b->target;
      return to_string(a->kind) < to_string(b->kind);
    });
    for (const GsnRelationship* r : rels) {
      text.lines.push_back(fmt::format("{}({}, {})", to_string(r->kind), r->source, r->target));
    }
  }
  return text;
}

FormalizedText serialize(const PatternDocument& pattern) {
  return serialize(pattern.structure(), DocumentKind::kPattern);
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

bool is_ident_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
         c == '_' || c == '.' || c == '-';
}

/// Thrown inside a single line; the parser converts it to a diagnostic and
/// moves on to the next line.
struct LineError {
  std::size_t column;
  std::string code;
  std::string message;
};

class LineScanner {
 public:
  explicit LineScanner(std::string_view line) : line_(line) {}

  std::size_t column() const { return pos_ + 1; }
  bool at_end() const { return pos_ >= line_.size(); }
  char peek() const { return at_end() ? '\0' : line_[pos_]; }

  void skip_space() {
    while (!at_end() && is_space(line_[pos_])) ++pos_;
  }

  std::string_view identifier() {
    skip_space();
    const std::size_t start = pos_;
    while (!at_end() && is_ident_char(line_[pos_])) ++pos_;
    if (start == pos_) {
      fail("GrammarViolation", at_end() ? "expected an identifier before end of line"
                                        : fmt::format("expected an identifier, found '{}'", peek()));
    }
    return line_.substr(start, pos_ - start);
  }

  void expect(char c) {
    skip_space();
    if (peek() != c) {
      fail("GrammarViolation", at_end() ? fmt::format("expected '{}' before end of line", c)
                                        : fmt::format("expected '{}', found '{}'", c, peek()));
    }
    ++pos_;
  }

  std::string quoted() {
    skip_space();
    if (peek() != '"') fail("GrammarViolation", "expected a quoted statement");
    const std::size_t open = pos_++;
    std::string out;
    while (!at_end()) {
      char c = line_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (at_end()) break;
      char esc = line_[pos_++];
      switch (esc) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 'r': out += '\r'; break;
        case 't': out += '\t'; break;
        default:
          pos_ -= 2;
          fail("InvalidEscape", fmt::format("unknown escape sequence '\\{}'", esc));
      }
    }
    pos_ = open;
    fail("GrammarViolation", "unterminated quoted statement");
    return {};
  }

  /// Accepts trailing whitespace and a comment.
  void finish() {
    skip_space();
    if (!at_end() && peek() != '#') {
      fail("GrammarViolation", fmt::format("unexpected '{}' after statement", peek()));
    }
  }

  [[noreturn]] void fail(std::string code, std::string message) const {
    throw LineError{column(), std::move(code), std::move(message)};
  }

 private:
  std::string_view line_;
  std::size_t pos_ = 0;
};

struct Located {
  std::size_t line;
  std::size_t column;
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

bool ParseResult::ok() const {
  return std::none_of(diagnostics.begin(), diagnostics.end(),
                      [](const Diagnostic& d) { return d.severity == Severity::kError; });
}

PatternDocument ParseResult::pattern() const { return PatternDocument(structure); }

ParseResult parse(std::string_view text) {
  ParseResult result;
  std::optional<std::string> name;
  std::vector<GsnElement> elements;
  std::vector<GsnRelationship> relationships;
  std::map<std::string, std::size_t> element_index;
  std::map<std::string, Located> element_line;
  std::map<std::pair<std::string, std::string>, Located> relationship_line;

  auto diagnose = [&result](std::size_t line, std::size_t column, std::string code,
                            std::string message, Severity severity = Severity::kError) {
    result.diagnostics.push_back(
        Diagnostic{line, column, severity, std::move(code), std::move(message)});
  };

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    const bool last = end == text.size();
    start = end + 1;

    LineScanner scan(line);
    scan.skip_space();
    if (scan.at_end() || scan.peek() == '#') {
      if (last) break;
      continue;
    }
    const std::size_t head_column = scan.column();
    try {
      std::string_view head = scan.identifier();
      scan.skip_space();
      if (scan.peek() == ':') {
        if (head != "AssuranceCase" && head != "Pattern") {
          scan.fail("GrammarViolation", fmt::format("unknown header '{}'", head));
        }
        if (name) {
          scan.fail("DuplicateHeader", "header already declared");
        }
        if (!elements.empty() || !relationships.empty()) {
          scan.fail("GrammarViolation", "header must precede all statements");
        }
        std::string_view rest = line.substr(scan.column());
        if (auto hash = rest.find('#'); hash != std::string_view::npos) rest = rest.substr(0, hash);
        name = trim(rest);
        result.kind = head == "Pattern" ? DocumentKind::kPattern : DocumentKind::kAssuranceCase;
        if (last) break;
        continue;
      }
      if (!name) {
        diagnose(line_no, head_column, "MissingHeader",
                 "expected 'AssuranceCase: <name>' or 'Pattern: <name>' before statements");
        name = std::string();
      }

      if (auto kind = element_kind_from_string(head)) {
        scan.expect('(');
        scan.skip_space();
        const std::size_t id_column = scan.column();
        std::string id(scan.identifier());
        scan.expect(',');
        std::string statement = scan.quoted();
        scan.expect(')');
        scan.finish();
        if (element_index.count(id)) {
          const Located& first = element_line[id];
          diagnose(line_no, id_column, "DuplicateId",
                   fmt::format("'{}' already declared at line {}", id, first.line));
        } else {
          if (result.kind == DocumentKind::kPattern) {
            try {
              scan_placeholders(statement);
            } catch (const Error& e) {
              diagnose(line_no, head_column, "MalformedPlaceholder", e.what());
            }
          }
          element_index[id] = elements.size();
          element_line[id] = Located{line_no, head_column};
          elements.push_back(GsnElement{id, *kind, std::move(statement), false});
        }
      } else if (head == "Undeveloped") {
        scan.expect('(');
        scan.skip_space();
        const std::size_t id_column = scan.column();
        std::string id(scan.identifier());
        scan.expect(')');
        scan.finish();
        auto it = element_index.find(id);
        if (it == element_index.end()) {
          diagnose(line_no, id_column, "UnknownElement",
                   fmt::format("Undeveloped refers to undeclared element '{}'", id));
        } else {
          elements[it->second].undeveloped = true;
        }
      } else if (auto rel = relationship_kind_from_string(head)) {
        scan.expect('(');
        scan.skip_space();
        const std::size_t source_column = scan.column();
        std::string source(scan.identifier());
        scan.expect(',');
        scan.skip_space();
        const std::size_t target_column = scan.column();
        std::string target(scan.identifier());
        scan.expect(')');
        scan.finish();
        bool dangling = false;
        for (auto [id, column] : {std::pair{&source, source_column},
                                  std::pair{&target, target_column}}) {
          if (!element_index.count(*id)) {
            diagnose(line_no, column, "DanglingEndpoint",
                     fmt::format("{}({}, {}) references undeclared element '{}'", head, source,
                                 target, *id));
            dangling = true;
            break;
          }
        }
        if (!dangling) {
          relationship_line.try_emplace({source, target}, Located{line_no, head_column});
          relationships.push_back(GsnRelationship{source, target, *rel});
        }
      } else {
        throw LineError{head_column, "UnknownElementKind",
                        fmt::format("unknown statement kind '{}'", head)};
      }
    } catch (const LineError& e) {
      diagnose(line_no, e.column, e.code, e.message);
    }
    if (last) break;
  }

  if (!name) {
    diagnose(1, 1, "MissingHeader", "empty document: no header and no statements");
    name = std::string();
  }
  result.structure = GoalStructure(*name, std::move(elements), std::move(relationships));

  // Notation rules that only show on the whole structure.
  for (const Violation& v : validate(result.structure)) {
    Located where{1, 1};
    if (v.ids.size() == 2 && relationship_line.count({v.ids[0], v.ids[1]})) {
      where = relationship_line[{v.ids[0], v.ids[1]}];
    } else if (!v.ids.empty() && element_line.count(v.ids[0])) {
      where = element_line[v.ids[0]];
    }
    diagnose(where.line, where.column, std::string(to_string(v.code)), v.message, v.severity);
  }
  std::stable_sort(result.diagnostics.begin(), result.diagnostics.end(),
                   [](const Diagnostic& a, const Diagnostic& b) {
                     return std::tie(a.line, a.column) < std::tie(b.line, b.column);
                   });
  return result;
}

FormalizedText canonicalize(std::string_view text) {
  ParseResult parsed = parse(text);
  if (!parsed.ok()) {
    const Diagnostic& first = *std::find_if(
        parsed.diagnostics.begin(), parsed.diagnostics.end(),
        [](const Diagnostic& d) { return d.severity == Severity::kError; });
    throw Error(ErrorCode::kInvalidStructure, format_diagnostic(first));
  }
  return serialize(parsed.structure, parsed.kind);
}

std::string format_diagnostic(const Diagnostic& d, std::string_view source_name) {
  return fmt::format("{}{}{}:{}: {}: {}: {}", source_name, source_name.empty() ? "" : ":", d.line,
                     d.column, to_string(d.severity), d.code, d.message);
}

}  // namespace gsnkit
