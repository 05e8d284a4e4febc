#include "gsnkit/metrics.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "gsnkit/error.h"

namespace gsnkit {

namespace {

constexpr std::string_view kStripChars = ".,;:!?()\"";

bool is_ws(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

struct NgramHash {
  std::size_t operator()(const std::vector<std::string_view>& gram) const {
    std::size_t h = 1469598103934665603ull;
    for (std::string_view part : gram) {
      h ^= std::hash<std::string_view>{}(part) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
};

using NgramCounts = std::unordered_map<std::vector<std::string_view>, std::size_t, NgramHash>;

NgramCounts count_ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::vector<std::string_view> gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                       tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++counts[gram];
  }
  return counts;
}

void require_tokens(const Tokens& a, const Tokens& b, const char* metric) {
  if (a.empty() || b.empty()) {
    throw Error(ErrorCode::kEmptyText, fmt::format("{}: text has no tokens", metric));
  }
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && is_ws(text[pos])) ++pos;
    const std::size_t start = pos;
    while (pos < text.size() && !is_ws(text[pos])) ++pos;
    if (start == pos) break;
    std::string token;
    token.reserve(pos - start);
    for (std::size_t i = start; i < pos; ++i) {
      const char c = text[i];
      if (c == '{' || c == '}') continue;
      token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    const auto first = token.find_first_not_of(kStripChars);
    if (first == std::string::npos) continue;
    const auto last = token.find_last_not_of(kStripChars);
    tokens.push_back(token.substr(first, last - first + 1));
  }
  return tokens;
}

double bleu(const Tokens& candidate, const Tokens& reference) {
  require_tokens(candidate, reference, "bleu");
  const std::size_t max_order = std::min<std::size_t>(4, candidate.size());
  const double floor = 1.0 / (2.0 * static_cast<double>(candidate.size()));
  double log_sum = 0;
  for (std::size_t n = 1; n <= max_order; ++n) {
    const NgramCounts cand = count_ngrams(candidate, n);
    const NgramCounts ref = count_ngrams(reference, n);
    std::size_t matched = 0;
    for (const auto& [gram, count] : cand) {
      auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(count, it->second);
    }
    const double total = static_cast<double>(candidate.size() - n + 1);
    const double precision = matched == 0 ? floor : static_cast<double>(matched) / total;
    log_sum += std::log(precision);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double brevity = c < r ? std::exp(1.0 - r / c) : 1.0;
  return brevity * std::exp(log_sum / static_cast<double>(max_order));
}

double bleu(std::string_view candidate, std::string_view reference) {
  return bleu(tokenize(candidate), tokenize(reference));
}

double cosine_similarity(const Tokens& a, const Tokens& b) {
  require_tokens(a, b, "cosine");
  std::unordered_map<std::string_view, double> fa;
  std::unordered_map<std::string_view, double> fb;
  for (const auto& t : a) fa[t] += 1;
  for (const auto& t : b) fb[t] += 1;
  double dot = 0;
  double na = 0;
  double nb = 0;
  for (const auto& [term, count] : fa) {
    na += count * count;
    auto it = fb.find(term);
    if (it != fb.end()) dot += count * it->second;
  }
  for (const auto& [_, count] : fb) nb += count * count;
  const double value = dot / std::sqrt(na * nb);
  return std::clamp(value, 0.0, 1.0);
}

double cosine_similarity(std::string_view a, std::string_view b) {
  return cosine_similarity(tokenize(a), tokenize(b));
}

const MetricRegistry& MetricRegistry::defaults() {
  static const MetricRegistry registry = [] {
    MetricRegistry r;
    r.add(std::string(kBleu), [](const Tokens& c, const Tokens& ref) { return bleu(c, ref); });
    r.add(std::string(kCosine),
          [](const Tokens& c, const Tokens& ref) { return cosine_similarity(c, ref); });
    return r;
  }();
  return registry;
}

void MetricRegistry::add(std::string name, Fn fn) {
  if (metrics_.count(name)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("metric '{}' already registered", name));
  }
  metrics_.emplace(std::move(name), std::move(fn));
}

bool MetricRegistry::contains(std::string_view name) const {
  return metrics_.find(name) != metrics_.end();
}

const MetricRegistry::Fn& MetricRegistry::get(std::string_view name) const {
  auto it = metrics_.find(name);
  if (it == metrics_.end()) {
    throw Error(ErrorCode::kInvalidRule, fmt::format("unknown metric '{}'", name));
  }
  return it->second;
}

std::vector<std::string> MetricRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : metrics_) out.push_back(name);
  return out;
}

void check_threshold(double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::kThresholdOutOfRange,
                fmt::format("threshold {} is outside [0, 1]", threshold));
  }
}

DetectionRule::DetectionRule(std::vector<MetricThreshold> clauses) : clauses_(std::move(clauses)) {
  if (clauses_.empty()) {
    throw Error(ErrorCode::kInvalidRule, "a detection rule needs at least one clause");
  }
  std::set<std::string> seen;
  for (const auto& clause : clauses_) {
    if (clause.metric.empty()) throw Error(ErrorCode::kInvalidRule, "clause without a metric");
    if (!seen.insert(clause.metric).second) {
      throw Error(ErrorCode::kInvalidRule,
                  fmt::format("metric '{}' appears in more than one clause", clause.metric));
    }
    check_threshold(clause.threshold);
  }
}

DetectionRule DetectionRule::uniform(double threshold) {
  return bleu_cosine(threshold, threshold);
}

DetectionRule DetectionRule::bleu_cosine(double bleu_threshold, double cosine_threshold) {
  return DetectionRule({{std::string(kBleu), bleu_threshold},
                        {std::string(kCosine), cosine_threshold}});
}

DetectionRule DetectionRule::with_threshold(double threshold) const {
  auto clauses = clauses_;
  for (auto& clause : clauses) clause.threshold = threshold;
  return DetectionRule(std::move(clauses));
}

RuleOutcome evaluate_rule(const DetectionRule& rule, const Tokens& pattern,
                          const Tokens& case_tokens, const MetricRegistry& registry) {
  RuleOutcome outcome;
  outcome.detected = true;
  for (const auto& clause : rule.clauses()) {
    const double value = registry.get(clause.metric)(case_tokens, pattern);
    const bool satisfied = value >= clause.threshold;
    outcome.results.push_back(MetricResult{clause.metric, value, clause.threshold, satisfied});
    outcome.detected = outcome.detected && satisfied;
  }
  return outcome;
}

RuleOutcome evaluate_rule(const DetectionRule& rule, const FormalizedText& pattern,
                          const FormalizedText& case_text, const MetricRegistry& registry) {
  return evaluate_rule(rule, tokenize(pattern.body()), tokenize(case_text.body()), registry);
}

RuleOutcome reapply(const DetectionRule& rule, const std::map<std::string, double>& values) {
  RuleOutcome outcome;
  outcome.detected = true;
  for (const auto& clause : rule.clauses()) {
    auto it = values.find(clause.metric);
    if (it == values.end()) {
      throw Error(ErrorCode::kInvalidRule, fmt::format("no value for metric '{}'", clause.metric));
    }
    const bool satisfied = it->second >= clause.threshold;
    outcome.results.push_back(MetricResult{clause.metric, it->second, clause.threshold, satisfied});
    outcome.detected = outcome.detected && satisfied;
  }
  return outcome;
}

}  // namespace gsnkit
