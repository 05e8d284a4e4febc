#pragma once

/// @file prose.h
/// Canonical structured-prose form of goal structures and patterns.
///
/// One statement per line:
///
///     AssuranceCase: <name>          (or  Pattern: <name>)
///     Goal(G1, "System is acceptably safe")
///     Undeveloped(G1)
///     SupportedBy(G1, S1)
///     InContextOf(G1, C1)
///
/// `#` starts a comment outside quotes. Statement strings escape `"`, `\`,
/// newline, carriage return and tab with a backslash. UTF-8, LF endings.
///
/// Canonical order: header, then elements breadth-first from the root with
/// children visited in lexicographic id order (each element directly
/// followed by its Undeveloped line, if any), then relationships grouped by
/// source in the same element order and sorted by (target, kind).

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gsnkit/model.h"

namespace gsnkit {

enum class DocumentKind { kAssuranceCase, kPattern };

std::string_view to_string(DocumentKind kind);

struct FormalizedText {
  DocumentKind kind = DocumentKind::kAssuranceCase;
  std::vector<std::string> lines;

  /// Full text, every line terminated by '\n'.
  std::string str() const;
  /// Everything but the header line; what the similarity metrics consume.
  std::string body() const;

  friend bool operator==(const FormalizedText&, const FormalizedText&) = default;
};

/// Throws Error(kInvalidStructure) when the structure has Error violations.
FormalizedText serialize(const GoalStructure& structure,
                         DocumentKind kind = DocumentKind::kAssuranceCase);
FormalizedText serialize(const PatternDocument& pattern);

/// Elements in canonical (breadth-first, id-ordered) order. Requires a
/// single root; unreachable elements are appended in id order.
std::vector<const GsnElement*> canonical_element_order(const GoalStructure& structure);

struct Diagnostic {
  std::size_t line = 0;    // 1-based
  std::size_t column = 0;  // 1-based, byte offset
  Severity severity = Severity::kError;
  std::string code;
  std::string message;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

struct ParseResult {
  DocumentKind kind = DocumentKind::kAssuranceCase;
  GoalStructure structure;
  std::vector<Diagnostic> diagnostics;

  bool ok() const;
  /// Pattern view of the structure; throws Error(kMalformedPlaceholder).
  PatternDocument pattern() const;
};

/// Never throws on bad input: every problem becomes a diagnostic and
/// parsing continues with the next line. With no Error diagnostics the
/// returned structure passes validate().
ParseResult parse(std::string_view text);

/// Reads a text and re-emits it canonically; throws Error(kInvalidStructure)
/// carrying the first diagnostic when parsing fails.
FormalizedText canonicalize(std::string_view text);

std::string format_diagnostic(const Diagnostic& diagnostic, std::string_view source_name = {});

/// Quote and escape a statement for the prose grammar.
std::string quote_statement(std::string_view statement);

}  // namespace gsnkit
