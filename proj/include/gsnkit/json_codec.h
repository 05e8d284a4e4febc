#pragma once

/// @file json_codec.h
/// JSON forms shared by the HTTP API, the CLI and the project store.
///
/// Structure (`.gsn.json`):
///   {"name": "...", "type": "AssuranceCase" | "Pattern",
///    "elements": [{"id", "kind", "statement", "undeveloped"}],
///    "relationships": [{"source", "target", "kind"}]}
/// Patterns add a derived, read-only "placeholders" array.
///
/// Decoders throw Error(kInvalidArgument) with field() set to the path of
/// the offending member; they check shape, not GSN rules.

#include "json.hpp"

#include "gsnkit/detection.h"
#include "gsnkit/instantiation.h"
#include "gsnkit/metrics.h"
#include "gsnkit/model.h"
#include "gsnkit/prose.h"

namespace gsnkit {

using Json = nlohmann::json;

Json to_json(const GoalStructure& structure, DocumentKind kind = DocumentKind::kAssuranceCase);
GoalStructure structure_from_json(const Json& j);
/// Value of "type", AssuranceCase when absent.
DocumentKind document_kind_from_json(const Json& j);

Json to_json(const PatternDocument& pattern);
/// Also throws Error(kMalformedPlaceholder).
PatternDocument pattern_from_json(const Json& j);

/// {"clauses": [{"metric", "threshold"}]}
Json to_json(const DetectionRule& rule);
/// Accepts {"clauses": [...]}, {"bleu": x, "cosine": y} or {"threshold": t}.
/// Throws Error(kThresholdOutOfRange) / Error(kInvalidRule) from the rule.
DetectionRule rule_from_json(const Json& j);

Json to_json(const DomainKnowledge& knowledge);
DomainKnowledge knowledge_from_json(const Json& j);

Json to_json(const Violation& violation);
Violation violation_from_json(const Json& j);
Json to_json(const Diagnostic& diagnostic);
Diagnostic diagnostic_from_json(const Json& j);
Json to_json(const RuleOutcome& outcome);
RuleOutcome rule_outcome_from_json(const Json& j);
Json to_json(const StructureStats& stats);
StructureStats structure_stats_from_json(const Json& j);

Json to_json(const DetectionReport& report);
DetectionReport detection_report_from_json(const Json& j);

Json to_json(const EvaluationRow& row);
EvaluationRow evaluation_row_from_json(const Json& j);
Json to_json(const EvaluationReport& report);
EvaluationReport evaluation_report_from_json(const Json& j);

}  // namespace gsnkit
