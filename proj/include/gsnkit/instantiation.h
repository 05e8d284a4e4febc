#pragma once

/// @file instantiation.h
/// Turning patterns into system-specific assurance cases: deterministic
/// placeholder substitution, zero-shot chain-of-thought prompt building,
/// and backend-driven generation.

#include <map>
#include <string>
#include <vector>

#include "gsnkit/backend.h"
#include "gsnkit/metrics.h"
#include "gsnkit/model.h"
#include "gsnkit/prose.h"

namespace gsnkit {

struct DomainKnowledge {
  std::string system;
  std::vector<std::string> facts;
  /// placeholder name -> replacement text
  std::map<std::string, std::string> bindings;

  /// Binding keys must be non-empty; facts may be empty only when
  /// `allow_empty_facts` (substitution fallback). Throws Error(kInvalidArgument).
  void check(bool allow_empty_facts) const;

  friend bool operator==(const DomainKnowledge&, const DomainKnowledge&) = default;
};

/// Replaces every bound `{name}` in every statement (single pass; inserted
/// text is not rescanned). Goals and strategies left with an unbound
/// placeholder are marked undeveloped. Ids, kinds and relationships are
/// untouched. A binding that would blank a statement is ignored.
GoalStructure substitute(const PatternDocument& pattern,
                         const std::map<std::string, std::string>& bindings);

enum class PromptTask { kInstantiate, kDetect };

/// Inputs for build_prompt; pointers are optional per task:
/// Instantiate needs `knowledge`, Detect needs `assurance_case` and `rule`.
struct PromptRequest {
  PromptTask task = PromptTask::kInstantiate;
  const PatternDocument* pattern = nullptr;
  const GoalStructure* assurance_case = nullptr;
  const DomainKnowledge* knowledge = nullptr;
  const DetectionRule* rule = nullptr;
  /// Detect only: metric values computed in-process, handed to the model so
  /// it applies the rule instead of estimating the metrics itself.
  const std::vector<MetricResult>* measured = nullptr;
};

/// System prompt sections, in order: reasoning steps, GSN notation
/// context, formalization rules, domain information (and for Detect the
/// threshold rule). The user prompt carries the formalized pattern and, for
/// Detect, the formalized assurance case. No worked examples are included.
/// Throws Error(kMissingInput).
PromptPair build_prompt(const PromptRequest& request);

/// Line the model is asked to end a detection reply with.
inline constexpr std::string_view kVerdictPrefix = "Verdict:";

/// Reads "Verdict: detected" / "Verdict: not detected" from a reply;
/// nullopt when the reply has no recognisable verdict line.
std::optional<bool> parse_verdict(std::string_view reply);

struct GenerationResult {
  GoalStructure structure;
  std::vector<Diagnostic> diagnostics;
  /// Backend reply as received, kept for manual refinement.
  std::string raw_reply;

  bool ok() const;
};

/// Strips a surrounding Markdown code fence, if any.
std::string strip_code_fence(std::string_view reply);

/// Prompts the backend for an assurance case and parses the reply.
/// Errors: kBackendUnavailable and kBackendRefusal from the backend;
/// kBackendRefusal for a prose refusal; kReplyUnparseable when no line of
/// the reply is a grammar statement.
GenerationResult generate_case(const PatternDocument& pattern, const DomainKnowledge& knowledge,
                               GenerationBackend& backend);

}  // namespace gsnkit
