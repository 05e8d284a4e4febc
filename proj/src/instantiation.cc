#include "gsnkit/instantiation.h"

#include <algorithm>
#include <array>
#include <cctype>

#include <fmt/format.h>

#include "gsnkit/error.h"

namespace gsnkit {

void DomainKnowledge::check(bool allow_empty_facts) const {
  for (const auto& [key, _] : bindings) {
    if (key.empty()) throw Error(ErrorCode::kInvalidArgument, "binding with an empty placeholder name");
  }
  if (!allow_empty_facts && facts.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("domain knowledge for '{}' has no facts", system));
  }
}

namespace {

bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

/// Substitutes bound placeholders; reports whether any stayed unbound.
std::string replace_placeholders(std::string_view statement,
                                 const std::map<std::string, std::string>& bindings,
                                 bool& unbound) {
  std::string out;
  std::size_t pos = 0;
  while (pos < statement.size()) {
    const std::size_t open = statement.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(statement.substr(pos));
      break;
    }
    const std::size_t close = statement.find('}', open);
    out.append(statement.substr(pos, open - pos));
    const std::string name(statement.substr(open + 1, close - open - 1));
    auto it = bindings.find(name);
    if (it != bindings.end()) {
      out += it->second;
    } else {
      unbound = true;
      out.append(statement.substr(open, close - open + 1));
    }
    pos = close + 1;
  }
  return out;
}

std::string format_threshold(double t) { return fmt::format("{}", t); }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

const char* kNotationContext =
    "GSN notation context:\n"
    "- Goal: a claim forming part of the argument.\n"
    "- Strategy: the inference linking a goal to its supporting goals.\n"
    "- Solution: a reference to an evidence item.\n"
    "- Context: information that scopes a goal or strategy.\n"
    "- Assumption: a statement taken as true without further support.\n"
    "- Justification: the reason a goal or strategy is considered acceptable.\n"
    "- Undeveloped decorator: marks a goal or strategy whose argument is not yet elaborated.\n"
    "- SupportedBy: inferential support; allowed Goal->Goal, Goal->Strategy, Goal->Solution, "
    "Strategy->Goal.\n"
    "- InContextOf: contextual link from a Goal or Strategy to a Context, Assumption or "
    "Justification.\n"
    "- A pattern is a goal structure whose statements contain placeholders written {name}.\n";

const char* kFormalizationRules =
    "Formalization rules (one predicate per line):\n"
    "- Header line: AssuranceCase: <name>   or   Pattern: <name>\n"
    "- Element: Kind(Id, \"Statement\") with Kind one of Goal, Strategy, Solution, Context, "
    "Assumption, Justification\n"
    "- Decorator: Undeveloped(Id)\n"
    "- Relationship: SupportedBy(ParentId, ChildId) and InContextOf(SourceId, ContextId)\n"
    "- Declare every element before any relationship that mentions it.\n"
    "- Escape double quotes inside statements as \\\".\n";

}  // namespace

GoalStructure substitute(const PatternDocument& pattern,
                         const std::map<std::string, std::string>& bindings) {
  const GoalStructure& source = pattern.structure();
  std::vector<GsnElement> elements;
  elements.reserve(source.elements().size());
  for (const GsnElement& e : source.elements()) {
    GsnElement out = e;
    bool unbound = false;
    std::string replaced = replace_placeholders(e.statement, bindings, unbound);
    if (blank(replaced)) {
      unbound = !pattern.placeholders().empty();
    } else {
      out.statement = std::move(replaced);
    }
    if (unbound && may_be_undeveloped(e.kind)) out.undeveloped = true;
    elements.push_back(std::move(out));
  }
  return GoalStructure(source.name(), std::move(elements),
                       {source.relationships().begin(), source.relationships().end()});
}

PromptPair build_prompt(const PromptRequest& request) {
  if (!request.pattern) throw Error(ErrorCode::kMissingInput, "a pattern is required");
  const bool detect = request.task == PromptTask::kDetect;
  if (detect && (!request.assurance_case || !request.rule)) {
    throw Error(ErrorCode::kMissingInput, "detection prompts need an assurance case and a rule");
  }
  if (!detect && !request.knowledge) {
    throw Error(ErrorCode::kMissingInput, "instantiation prompts need domain knowledge");
  }

  std::string system;
  if (detect) {
    system +=
        "You decide whether a GSN assurance case pattern is present in a GSN assurance case. "
        "Work through the following steps in order.\n"
        "Step 1: Read the formalized pattern and list its elements, relationships and "
        "placeholders.\n"
        "Step 2: Read the formalized assurance case and list its elements and relationships.\n"
        "Step 3: Align elements of the same kind and compare their statements, treating each "
        "placeholder as a slot for system-specific text.\n"
        "Step 4: Take the value of every metric named in the detection rule for the two "
        "formalized texts.\n"
        "Step 5: Check each clause of the detection rule separately.\n"
        "Step 6: Conclude with one final line, either \"Verdict: detected\" or "
        "\"Verdict: not detected\".\n\n";
  } else {
    system +=
        "You instantiate GSN assurance case patterns into system-specific assurance cases. "
        "Work through the following steps in order.\n"
        "Step 1: Read the formalized pattern and list every placeholder.\n"
        "Step 2: For each placeholder choose system-specific text from the domain information.\n"
        "Step 3: Keep every element id, element kind and relationship of the pattern; add "
        "elements only where the domain information requires it.\n"
        "Step 4: Mark a goal or strategy Undeveloped when the domain information cannot "
        "support it.\n"
        "Step 5: Reply with the formalized assurance case only, starting with the header "
        "line \"AssuranceCase: <system name>\" and nothing else before or after it.\n\n";
  }
  system += kNotationContext;
  system += '\n';
  system += kFormalizationRules;
  system += '\n';

  system += "Domain information:\n";
  if (request.knowledge) {
    system += fmt::format("System: {}\n", request.knowledge->system);
    for (const auto& fact : request.knowledge->facts) system += fmt::format("- {}\n", fact);
    if (!request.knowledge->bindings.empty()) {
      system += "Known placeholder values:\n";
      for (const auto& [name, value] : request.knowledge->bindings) {
        system += fmt::format("- {{{}}} = {}\n", name, value);
      }
    }
  } else {
    system += fmt::format("System: {}\n", request.assurance_case->name());
  }

  if (detect) {
    system += "\nDetection rule:\n";
    const auto& clauses = request.rule->clauses();
    for (std::size_t i = 0; i < clauses.size(); ++i) {
      system += fmt::format("{}the value of {} is superior or equal to {}",
                            i == 0 ? "If " : ", AND if ", clauses[i].metric,
                            format_threshold(clauses[i].threshold));
    }
    system +=
        ", then the formalized pattern is detected in the formalized assurance case. "
        "Otherwise the pattern is not detected.\n";
  }

  std::string user = "Formalized assurance case pattern:\n";
  user += serialize(*request.pattern).str();
  if (detect) {
    user += "\nFormalized assurance case:\n";
    user += serialize(*request.assurance_case).str();
    if (request.measured) {
      user += "\nMeasured metric values:\n";
      for (const auto& m : *request.measured) {
        user += fmt::format("- {} = {:.6f}\n", m.metric, m.value);
      }
    }
  } else {
    user += fmt::format("\nProduce the assurance case for: {}\n", request.knowledge->system);
  }
  return PromptPair{std::move(system), std::move(user)};
}

std::optional<bool> parse_verdict(std::string_view reply) {
  std::optional<bool> verdict;
  std::size_t start = 0;
  while (start <= reply.size()) {
    std::size_t end = reply.find('\n', start);
    if (end == std::string_view::npos) end = reply.size();
    std::string line = lower(reply.substr(start, end - start));
    line.erase(std::remove(line.begin(), line.end(), '*'), line.end());
    const auto first = line.find_first_not_of(" \t\r");
    if (first != std::string::npos) {
      std::string_view rest = std::string_view(line).substr(first);
      if (rest.rfind("verdict:", 0) == 0) {
        rest.remove_prefix(8);
        while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
        if (rest.rfind("not detected", 0) == 0) {
          verdict = false;
        } else if (rest.rfind("detected", 0) == 0) {
          verdict = true;
        }
      }
    }
    if (end == reply.size()) break;
    start = end + 1;
  }
  return verdict;
}

bool GenerationResult::ok() const {
  return std::none_of(diagnostics.begin(), diagnostics.end(),
                      [](const Diagnostic& d) { return d.severity == Severity::kError; });
}

std::string strip_code_fence(std::string_view reply) {
  const auto open = reply.find("```");
  if (open == std::string_view::npos) return std::string(reply);
  const auto body_start = reply.find('\n', open);
  if (body_start == std::string_view::npos) return std::string(reply);
  const auto close = reply.find("```", body_start);
  return std::string(reply.substr(body_start + 1, close == std::string_view::npos
                                                      ? std::string_view::npos
                                                      : close - body_start - 1));
}

GenerationResult generate_case(const PatternDocument& pattern, const DomainKnowledge& knowledge,
                               GenerationBackend& backend) {
  knowledge.check(false);
  if (!is_valid(pattern.structure())) {
    throw Error(ErrorCode::kInvalidStructure, "pattern does not validate");
  }
  PromptRequest request;
  request.task = PromptTask::kInstantiate;
  request.pattern = &pattern;
  request.knowledge = &knowledge;
  const PromptPair prompt = build_prompt(request);

  GenerationResult result;
  result.raw_reply = backend.complete(prompt);
  std::string text = strip_code_fence(result.raw_reply);

  // Tolerate a missing header: supply one and shift line numbers back.
  ParseResult probe = parse(text);
  const bool missing_header =
      std::any_of(probe.diagnostics.begin(), probe.diagnostics.end(),
                  [](const Diagnostic& d) { return d.code == "MissingHeader"; });
  ParseResult parsed =
      missing_header ? parse(fmt::format("AssuranceCase: {}\n{}", knowledge.system, text))
                     : std::move(probe);
  if (missing_header) {
    for (auto& d : parsed.diagnostics) d.line = d.line > 1 ? d.line - 1 : 1;
  }

  if (parsed.structure.elements().empty()) {
    const std::string lowered = lower(result.raw_reply);
    static constexpr std::array<std::string_view, 7> kRefusals = {
        "i'm sorry", "i am sorry", "i cannot", "i can't", "i can not", "unable to", "as an ai"};
    for (std::string_view phrase : kRefusals) {
      if (lowered.find(phrase) != std::string::npos) {
        throw Error(ErrorCode::kBackendRefusal,
                    fmt::format("backend '{}' declined: {}", backend.name(),
                                result.raw_reply.substr(0, 200)));
      }
    }
    throw Error(ErrorCode::kReplyUnparseable,
                fmt::format("backend '{}' reply contains no formalized statements", backend.name()));
  }

  result.structure = parsed.structure.name().empty()
                         ? parsed.structure.with_name(knowledge.system)
                         : std::move(parsed.structure);
  result.diagnostics = std::move(parsed.diagnostics);
  return result;
}

}  // namespace gsnkit
