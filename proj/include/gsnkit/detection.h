#pragma once

/// @file detection.h
/// Pattern detection over a candidate library and the multi-run,
/// multi-threshold evaluation protocol with precision/recall/F-measure.

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gsnkit/backend.h"
#include "gsnkit/instantiation.h"
#include "gsnkit/metrics.h"
#include "gsnkit/model.h"

namespace gsnkit {

struct NamedPattern {
  std::string name;
  PatternDocument pattern;
};

struct DetectionJob {
  GoalStructure assurance_case;
  std::vector<NamedPattern> candidates;
  DetectionRule rule = DetectionRule::uniform(0.4);
  std::size_t runs = 1;
  /// nullptr: deterministic metrics only. Otherwise each run also asks the
  /// backend to apply the rule and its verdict is cross-checked.
  std::shared_ptr<GenerationBackend> backend;
};

struct RunResult {
  RuleOutcome outcome;
  /// Verdict read from the backend reply (LLM mode only).
  std::optional<bool> model_verdict;

  friend bool operator==(const RunResult&, const RunResult&) = default;
};

struct CandidateReport {
  std::string pattern;
  std::vector<RunResult> runs;
  /// Majority over runs: detected in more than runs/2 runs.
  bool detected = false;
  std::size_t detections = 0;
  /// Runs whose model verdict was missing or differed from the rule.
  std::size_t disagreements = 0;

  friend bool operator==(const CandidateReport&, const CandidateReport&) = default;
};

struct DetectionReport {
  std::string assurance_case;
  std::vector<CandidateReport> candidates;

  /// Names with a majority verdict of detected.
  std::set<std::string> detected() const;
  /// Names detected in the given run.
  std::set<std::string> detected_in_run(std::size_t run) const;

  friend bool operator==(const DetectionReport&, const DetectionReport&) = default;
};

/// Throws Error(kInvalidArgument) for runs = 0 or no candidates,
/// Error(kInvalidStructure) for invalid inputs, and propagates backend
/// errors in LLM mode.
DetectionReport detect(const DetectionJob& job);

/// |detected ∩ truth| / |detected|, 0 when nothing was detected.
double precision(const std::set<std::string>& detected, const std::set<std::string>& truth);
/// |detected ∩ truth| / |truth|. Throws Error(kEmptyGroundTruth).
double recall(const std::set<std::string>& detected, const std::set<std::string>& truth);
/// Harmonic mean, 0 when p + r = 0.
double f_measure(double p, double r);

struct CorpusEntry {
  std::string system;
  std::string case_name;
  GoalStructure assurance_case;
  std::set<std::string> truth;
  /// Offered but not used to build the case.
  std::set<std::string> distractors;

  /// truth ∪ distractors, sorted.
  std::vector<std::string> candidates() const;
};

struct Corpus {
  std::map<std::string, PatternDocument> patterns;
  std::vector<CorpusEntry> entries;
  std::map<std::string, DomainKnowledge> knowledge;
};

/// Directory layout:
///   cases/<name>.gsn.txt     assurance cases
///   patterns/<name>.gsn.txt  patterns, named by file stem
///   truth.json               {"systems": [{"system", "case", "patterns", "distractors"}]}
///   knowledge/<case>.json    optional {"system", "facts", "bindings"}
/// Throws Error(kNotFound), Error(kInvalidStructure), Error(kInvalidArgument)
/// for unknown references and Error(kEmptyGroundTruth).
Corpus load_corpus(const std::filesystem::path& dir);

inline const std::vector<double> kDefaultThresholds = {0.2, 0.4, 0.6, 0.8, 1.0};
inline constexpr std::size_t kDefaultRuns = 5;

struct NamedBackend {
  std::string name;
  /// nullptr for the deterministic engine.
  std::shared_ptr<GenerationBackend> backend;
};

struct EvaluationOptions {
  std::vector<double> thresholds = kDefaultThresholds;
  std::size_t runs = kDefaultRuns;
  std::vector<NamedBackend> backends = {{"deterministic", nullptr}};
  /// Rule whose clauses are re-thresholded per cell.
  DetectionRule rule = DetectionRule::uniform(0.0);
  std::size_t workers = 0;  // 0: hardware concurrency
};

struct EvaluationRow {
  std::string system;
  std::string backend;
  double threshold = 0;
  double recall = 0;
  double precision = 0;
  double f_measure = 0;
  std::size_t runs = 0;
  bool failed = false;
  std::string error;

  friend bool operator==(const EvaluationRow&, const EvaluationRow&) = default;
};

struct EvaluationReport {
  /// System-major (corpus order), then backend, then ascending threshold.
  std::vector<EvaluationRow> rows;

  /// Text table: one line per (system, backend), R/P/FM per threshold.
  std::string to_table() const;
  /// One JSON object per line, one line per row.
  std::string to_records() const;

  friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

/// Values in tables: two decimals, trailing zeros dropped ("0.67", "0.5", "1", "0").
std::string format_score(double value);

/// Runs every (system, backend, threshold) cell. A failing cell is marked
/// and the others still run. Throws Error(kThresholdOutOfRange) and
/// Error(kInvalidArgument) for bad options.
EvaluationReport evaluate_corpus(const Corpus& corpus, const EvaluationOptions& options);

}  // namespace gsnkit
