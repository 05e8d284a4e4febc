#include "gsnkit/json_codec.h"

#include <fmt/format.h>

#include "gsnkit/error.h"

namespace gsnkit {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: {}", path.empty() ? "body" : path, message),
              path);
}

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : fmt::format("{}.{}", path, key);
}

std::string index(const std::string& path, std::size_t i) { return fmt::format("{}[{}]", path, i); }

void require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

const Json& member(const Json& j, std::string_view key, const std::string& path) {
  require_object(j, path);
  auto it = j.find(key);
  if (it == j.end()) fail(join(path, key), "missing");
  return *it;
}

std::string string_member(const Json& j, std::string_view key, const std::string& path) {
  const Json& v = member(j, key, path);
  if (!v.is_string()) fail(join(path, key), "expected a string");
  return v.get<std::string>();
}

std::string optional_string(const Json& j, std::string_view key, const std::string& path) {
  require_object(j, path);
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) fail(join(path, key), "expected a string");
  return it->get<std::string>();
}

bool optional_bool(const Json& j, std::string_view key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return false;
  if (!it->is_boolean()) fail(join(path, key), "expected a boolean");
  return it->get<bool>();
}

double number_member(const Json& j, std::string_view key, const std::string& path) {
  const Json& v = member(j, key, path);
  if (!v.is_number()) fail(join(path, key), "expected a number");
  return v.get<double>();
}

const Json& array_member(const Json& j, std::string_view key, const std::string& path) {
  const Json& v = member(j, key, path);
  if (!v.is_array()) fail(join(path, key), "expected an array");
  return v;
}

std::size_t count_member(const Json& j, std::string_view key, const std::string& path) {
  const Json& v = member(j, key, path);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    fail(join(path, key), "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

Json to_json(const GoalStructure& structure, DocumentKind kind) {
  Json elements = Json::array();
  for (const auto& e : structure.elements()) {
    elements.push_back({{"id", e.id},
                        {"kind", to_string(e.kind)},
                        {"statement", e.statement},
                        {"undeveloped", e.undeveloped}});
  }
  Json relationships = Json::array();
  for (const auto& r : structure.relationships()) {
    relationships.push_back({{"source", r.source}, {"target", r.target}, {"kind", to_string(r.kind)}});
  }
  return {{"name", structure.name()},
          {"type", to_string(kind)},
          {"elements", std::move(elements)},
          {"relationships", std::move(relationships)}};
}

DocumentKind document_kind_from_json(const Json& j) {
  const std::string type = optional_string(j, "type", "");
  if (type.empty() || type == "AssuranceCase") return DocumentKind::kAssuranceCase;
  if (type == "Pattern") return DocumentKind::kPattern;
  fail("type", fmt::format("unknown document type '{}'", type));
}

GoalStructure structure_from_json(const Json& j) {
  require_object(j, "");
  document_kind_from_json(j);
  std::string name = optional_string(j, "name", "");
  std::vector<GsnElement> elements;
  const Json& jelements = array_member(j, "elements", "");
  for (std::size_t i = 0; i < jelements.size(); ++i) {
    const std::string path = index("elements", i);
    GsnElement e;
    e.id = string_member(jelements[i], "id", path);
    const std::string kind = string_member(jelements[i], "kind", path);
    const auto parsed = element_kind_from_string(kind);
    if (!parsed) fail(join(path, "kind"), fmt::format("unknown element kind '{}'", kind));
    e.kind = *parsed;
    e.statement = string_member(jelements[i], "statement", path);
    e.undeveloped = optional_bool(jelements[i], "undeveloped", path);
    elements.push_back(std::move(e));
  }
  std::vector<GsnRelationship> relationships;
  if (j.contains("relationships")) {
    const Json& jrels = array_member(j, "relationships", "");
    for (std::size_t i = 0; i < jrels.size(); ++i) {
      const std::string path = index("relationships", i);
      GsnRelationship r;
      r.source = string_member(jrels[i], "source", path);
      r.target = string_member(jrels[i], "target", path);
      const std::string kind = string_member(jrels[i], "kind", path);
      const auto parsed = relationship_kind_from_string(kind);
      if (!parsed) fail(join(path, "kind"), fmt::format("unknown relationship kind '{}'", kind));
      r.kind = *parsed;
      relationships.push_back(std::move(r));
    }
  }
  return GoalStructure(std::move(name), std::move(elements), std::move(relationships));
}

Json to_json(const PatternDocument& pattern) {
  Json j = to_json(pattern.structure(), DocumentKind::kPattern);
  j["placeholders"] = Json(std::vector<std::string>(pattern.placeholders().begin(),
                                                     pattern.placeholders().end()));
  return j;
}

PatternDocument pattern_from_json(const Json& j) {
  return PatternDocument(structure_from_json(j));
}

Json to_json(const DetectionRule& rule) {
  Json clauses = Json::array();
  for (const auto& c : rule.clauses()) {
    clauses.push_back({{"metric", c.metric}, {"threshold", c.threshold}});
  }
  return {{"clauses", std::move(clauses)}};
}

DetectionRule rule_from_json(const Json& j) {
  require_object(j, "");
  if (j.contains("clauses")) {
    const Json& jclauses = array_member(j, "clauses", "");
    std::vector<MetricThreshold> clauses;
    for (std::size_t i = 0; i < jclauses.size(); ++i) {
      const std::string path = index("clauses", i);
      clauses.push_back({string_member(jclauses[i], "metric", path),
                         number_member(jclauses[i], "threshold", path)});
    }
    return DetectionRule(std::move(clauses));
  }
  if (j.contains("threshold")) return DetectionRule::uniform(number_member(j, "threshold", ""));
  if (j.contains("bleu") || j.contains("cosine")) {
    return DetectionRule::bleu_cosine(number_member(j, "bleu", ""), number_member(j, "cosine", ""));
  }
  fail("", "expected clauses, threshold, or bleu and cosine");
}

Json to_json(const DomainKnowledge& knowledge) {
  return {{"system", knowledge.system}, {"facts", knowledge.facts}, {"bindings", knowledge.bindings}};
}

DomainKnowledge knowledge_from_json(const Json& j) {
  DomainKnowledge k;
  k.system = string_member(j, "system", "");
  if (j.contains("facts")) {
    const Json& facts = array_member(j, "facts", "");
    for (std::size_t i = 0; i < facts.size(); ++i) {
      if (!facts[i].is_string()) fail(index("facts", i), "expected a string");
      k.facts.push_back(facts[i].get<std::string>());
    }
  }
  if (j.contains("bindings")) {
    const Json& bindings = j["bindings"];
    if (!bindings.is_object()) fail("bindings", "expected an object");
    for (const auto& [key, value] : bindings.items()) {
      if (!value.is_string()) fail(join("bindings", key), "expected a string");
      k.bindings.emplace(key, value.get<std::string>());
    }
  }
  return k;
}

Json to_json(const Violation& violation) {
  return {{"code", to_string(violation.code)},
          {"severity", to_string(violation.severity)},
          {"ids", violation.ids},
          {"message", violation.message}};
}

namespace {

Severity severity_at(const Json& j, const std::string& path) {
  const std::string s = string_member(j, "severity", path);
  if (s == "error") return Severity::kError;
  if (s == "warning") return Severity::kWarning;
  fail(join(path, "severity"), fmt::format("unknown severity '{}'", s));
}

std::vector<std::string> string_array(const Json& j, std::string_view key, const std::string& path) {
  const Json& a = array_member(j, key, path);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_string()) fail(index(join(path, key), i), "expected a string");
    out.push_back(a[i].get<std::string>());
  }
  return out;
}

}  // namespace

Violation violation_from_json(const Json& j) {
  const std::string name = string_member(j, "code", "");
  std::optional<ViolationCode> code;
  for (int i = 0; i <= static_cast<int>(ViolationCode::kUndevelopedWithChildren); ++i) {
    if (to_string(static_cast<ViolationCode>(i)) == name) code = static_cast<ViolationCode>(i);
  }
  if (!code) fail("code", fmt::format("unknown violation code '{}'", name));
  return Violation{*code, severity_at(j, ""), string_array(j, "ids", ""), string_member(j, "message", "")};
}

Json to_json(const Diagnostic& diagnostic) {
  return {{"line", diagnostic.line},
          {"column", diagnostic.column},
          {"severity", to_string(diagnostic.severity)},
          {"code", diagnostic.code},
          {"message", diagnostic.message}};
}

Diagnostic diagnostic_from_json(const Json& j) {
  Diagnostic d;
  d.line = count_member(j, "line", "");
  d.column = count_member(j, "column", "");
  d.severity = severity_at(j, "");
  d.code = string_member(j, "code", "");
  d.message = string_member(j, "message", "");
  return d;
}

Json to_json(const RuleOutcome& outcome) {
  Json results = Json::array();
  for (const auto& r : outcome.results) {
    results.push_back({{"metric", r.metric},
                       {"value", r.value},
                       {"threshold", r.threshold},
                       {"satisfied", r.satisfied}});
  }
  return {{"detected", outcome.detected}, {"metrics", std::move(results)}};
}

Json to_json(const StructureStats& stats) {
  Json kinds = Json::object();
  for (ElementKind k : kAllElementKinds) kinds[std::string(to_string(k))] = stats.count(k);
  Json rels = Json::object();
  for (RelationshipKind k : kAllRelationshipKinds) rels[std::string(to_string(k))] = stats.count(k);
  return {{"elements", stats.elements},
          {"relationships", stats.relationships},
          {"per_kind", std::move(kinds)},
          {"per_relationship_kind", std::move(rels)},
          {"placeholders", stats.placeholders},
          {"undeveloped", stats.undeveloped}};
}

StructureStats structure_stats_from_json(const Json& j) {
  StructureStats stats;
  stats.elements = count_member(j, "elements", "");
  stats.relationships = count_member(j, "relationships", "");
  const Json& kinds = member(j, "per_kind", "");
  for (ElementKind k : kAllElementKinds) {
    stats.per_kind[static_cast<std::size_t>(k)] = count_member(kinds, to_string(k), "per_kind");
  }
  const Json& rels = member(j, "per_relationship_kind", "");
  for (RelationshipKind k : kAllRelationshipKinds) {
    stats.per_relationship_kind[static_cast<std::size_t>(k)] =
        count_member(rels, to_string(k), "per_relationship_kind");
  }
  stats.placeholders = count_member(j, "placeholders", "");
  stats.undeveloped = count_member(j, "undeveloped", "");
  return stats;
}

namespace {

RuleOutcome outcome_from_json(const Json& j, const std::string& path) {
  RuleOutcome outcome;
  const Json& detected = member(j, "detected", path);
  if (!detected.is_boolean()) fail(join(path, "detected"), "expected a boolean");
  outcome.detected = detected.get<bool>();
  const std::string mpath = join(path, "metrics");
  const Json& metrics = array_member(j, "metrics", path);
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const std::string p = index(mpath, i);
    MetricResult r;
    r.metric = string_member(metrics[i], "metric", p);
    r.value = number_member(metrics[i], "value", p);
    r.threshold = number_member(metrics[i], "threshold", p);
    r.satisfied = optional_bool(metrics[i], "satisfied", p);
    outcome.results.push_back(std::move(r));
  }
  return outcome;
}

}  // namespace

RuleOutcome rule_outcome_from_json(const Json& j) { return outcome_from_json(j, ""); }

Json to_json(const DetectionReport& report) {
  Json candidates = Json::array();
  for (const auto& c : report.candidates) {
    Json runs = Json::array();
    for (const auto& run : c.runs) {
      Json jr = to_json(run.outcome);
      jr["model_verdict"] = run.model_verdict ? Json(*run.model_verdict) : Json(nullptr);
      runs.push_back(std::move(jr));
    }
    candidates.push_back({{"pattern", c.pattern},
                          {"detected", c.detected},
                          {"detections", c.detections},
                          {"disagreements", c.disagreements},
                          {"runs", std::move(runs)}});
  }
  return {{"case", report.assurance_case}, {"candidates", std::move(candidates)}};
}

DetectionReport detection_report_from_json(const Json& j) {
  DetectionReport report;
  report.assurance_case = string_member(j, "case", "");
  const Json& candidates = array_member(j, "candidates", "");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const std::string path = index("candidates", i);
    const Json& jc = candidates[i];
    CandidateReport c;
    c.pattern = string_member(jc, "pattern", path);
    c.detected = optional_bool(jc, "detected", path);
    c.detections = count_member(jc, "detections", path);
    c.disagreements = count_member(jc, "disagreements", path);
    const std::string rpath = join(path, "runs");
    const Json& runs = array_member(jc, "runs", path);
    for (std::size_t r = 0; r < runs.size(); ++r) {
      RunResult run{outcome_from_json(runs[r], index(rpath, r)), std::nullopt};
      auto it = runs[r].find("model_verdict");
      if (it != runs[r].end() && !it->is_null()) {
        if (!it->is_boolean()) fail(join(index(rpath, r), "model_verdict"), "expected a boolean");
        run.model_verdict = it->get<bool>();
      }
      c.runs.push_back(std::move(run));
    }
    report.candidates.push_back(std::move(c));
  }
  return report;
}

Json to_json(const EvaluationRow& row) {
  Json j = {{"system", row.system},       {"backend", row.backend},
            {"threshold", row.threshold}, {"recall", row.recall},
            {"precision", row.precision}, {"f_measure", row.f_measure},
            {"runs", row.runs},           {"failed", row.failed}};
  if (row.failed) j["error"] = row.error;
  return j;
}

namespace {

EvaluationRow row_at(const Json& j, const std::string& path) {
  EvaluationRow row;
  row.system = string_member(j, "system", path);
  row.backend = string_member(j, "backend", path);
  row.threshold = number_member(j, "threshold", path);
  row.recall = number_member(j, "recall", path);
  row.precision = number_member(j, "precision", path);
  row.f_measure = number_member(j, "f_measure", path);
  row.runs = count_member(j, "runs", path);
  row.failed = optional_bool(j, "failed", path);
  row.error = optional_string(j, "error", path);
  return row;
}

}  // namespace

EvaluationRow evaluation_row_from_json(const Json& j) { return row_at(j, ""); }

Json to_json(const EvaluationReport& report) {
  Json rows = Json::array();
  for (const auto& row : report.rows) rows.push_back(to_json(row));
  return {{"rows", std::move(rows)}};
}

EvaluationReport evaluation_report_from_json(const Json& j) {
  EvaluationReport report;
  const Json& rows = array_member(j, "rows", "");
  for (std::size_t i = 0; i < rows.size(); ++i) report.rows.push_back(row_at(rows[i], index("rows", i)));
  return report;
}

}  // namespace gsnkit
