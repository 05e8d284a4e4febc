#pragma once

/// @file metrics.h
/// Text-similarity metrics and the conjunctive threshold rule used for
/// pattern detection.

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gsnkit/prose.h"

namespace gsnkit {

using Tokens = std::vector<std::string>;

/// Lowercases, splits on whitespace, strips surrounding `.,;:!?()"` and
/// drops placeholder braces while keeping the names. Empty tokens vanish.
Tokens tokenize(std::string_view text);

/// Corpus-free sentence BLEU, candidate against a single reference.
///
/// Geometric mean of clipped n-gram precisions for n = 1..min(4, |cand|),
/// times the brevity penalty exp(1 - |ref|/|cand|) when the candidate is
/// shorter. A zero precision is floored to 1 / (2 |cand|).
/// Throws Error(kEmptyText) if either side has no tokens.
double bleu(const Tokens& candidate, const Tokens& reference);
double bleu(std::string_view candidate, std::string_view reference);

/// Cosine between raw term-frequency vectors over the joint vocabulary.
/// Non-negative counts keep the value in [0, 1].
/// Throws Error(kEmptyText) if either side has no tokens.
double cosine_similarity(const Tokens& a, const Tokens& b);
double cosine_similarity(std::string_view a, std::string_view b);

inline constexpr std::string_view kBleu = "bleu";
inline constexpr std::string_view kCosine = "cosine";

/// Metric functions keyed by name; called as fn(candidate, reference).
class MetricRegistry {
 public:
  using Fn = std::function<double(const Tokens&, const Tokens&)>;

  /// "bleu" and "cosine".
  static const MetricRegistry& defaults();

  /// Throws Error(kInvalidArgument) on a duplicate name.
  void add(std::string name, Fn fn);
  bool contains(std::string_view name) const;
  /// Throws Error(kInvalidRule) for unknown names.
  const Fn& get(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Fn, std::less<>> metrics_;
};

struct MetricThreshold {
  std::string metric;
  double threshold = 0;

  friend bool operator==(const MetricThreshold&, const MetricThreshold&) = default;
};

/// Non-empty ordered list of clauses, at most one per metric, thresholds in
/// [0, 1]. The constructor enforces this: Error(kInvalidRule) for structural
/// problems, Error(kThresholdOutOfRange) for thresholds.
class DetectionRule {
 public:
  explicit DetectionRule(std::vector<MetricThreshold> clauses);

  /// Same threshold for BLEU and cosine.
  static DetectionRule uniform(double threshold);
  static DetectionRule bleu_cosine(double bleu_threshold, double cosine_threshold);

  const std::vector<MetricThreshold>& clauses() const { return clauses_; }

  /// Same clauses with every threshold replaced.
  DetectionRule with_threshold(double threshold) const;

  friend bool operator==(const DetectionRule&, const DetectionRule&) = default;

 private:
  std::vector<MetricThreshold> clauses_;
};

void check_threshold(double threshold);

struct MetricResult {
  std::string metric;
  double value = 0;
  double threshold = 0;
  bool satisfied = false;

  friend bool operator==(const MetricResult&, const MetricResult&) = default;
};

struct RuleOutcome {
  bool detected = false;
  std::vector<MetricResult> results;

  friend bool operator==(const RuleOutcome&, const RuleOutcome&) = default;
};

/// Applies every clause with the case as candidate and the pattern as
/// reference. detected is the conjunction of value >= threshold.
RuleOutcome evaluate_rule(const DetectionRule& rule, const FormalizedText& pattern,
                          const FormalizedText& case_text,
                          const MetricRegistry& registry = MetricRegistry::defaults());

/// Same, on token sequences prepared by the caller.
RuleOutcome evaluate_rule(const DetectionRule& rule, const Tokens& pattern,
                          const Tokens& case_tokens,
                          const MetricRegistry& registry = MetricRegistry::defaults());

/// Re-applies the thresholds of `rule` to already computed metric values.
RuleOutcome reapply(const DetectionRule& rule, const std::map<std::string, double>& values);

}  // namespace gsnkit
