#include "gsnkit/detection.h"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"

#include "gsnkit/error.h"
#include "gsnkit/json_codec.h"
#include "gsnkit/prose.h"

namespace gsnkit {

namespace fs = std::filesystem;
using nlohmann::json;

std::set<std::string> DetectionReport::detected() const {
  std::set<std::string> out;
  for (const auto& c : candidates) {
    if (c.detected) out.insert(c.pattern);
  }
  return out;
}

std::set<std::string> DetectionReport::detected_in_run(std::size_t run) const {
  std::set<std::string> out;
  for (const auto& c : candidates) {
    if (run < c.runs.size() && c.runs[run].outcome.detected) out.insert(c.pattern);
  }
  return out;
}

namespace {

void require_valid(const GoalStructure& structure, std::string_view what) {
  const auto violations = validate(structure);
  if (has_errors(violations)) {
    const auto first = std::find_if(violations.begin(), violations.end(),
                                    [](const Violation& v) { return v.severity == Severity::kError; });
    throw Error(ErrorCode::kInvalidStructure,
                fmt::format("{} '{}' is invalid: {}", what, structure.name(), first->message));
  }
}

}  // namespace

DetectionReport detect(const DetectionJob& job) {
  if (job.runs < 1) throw Error(ErrorCode::kInvalidArgument, "runs must be >= 1");
  if (job.candidates.empty()) throw Error(ErrorCode::kInvalidArgument, "no candidate patterns");
  require_valid(job.assurance_case, "assurance case");
  for (const auto& c : job.candidates) require_valid(c.pattern.structure(), "pattern");

  const Tokens case_tokens = tokenize(serialize(job.assurance_case).body());

  DetectionReport report;
  report.assurance_case = job.assurance_case.name();
  for (const auto& candidate : job.candidates) {
    CandidateReport entry;
    entry.pattern = candidate.name;
    const RuleOutcome outcome =
        evaluate_rule(job.rule, tokenize(serialize(candidate.pattern).body()), case_tokens);

    for (std::size_t run = 0; run < job.runs; ++run) {
      RunResult result{outcome, std::nullopt};
      if (job.backend) {
        PromptRequest request;
        request.task = PromptTask::kDetect;
        request.pattern = &candidate.pattern;
        request.assurance_case = &job.assurance_case;
        request.rule = &job.rule;
        request.measured = &outcome.results;
        const std::string reply = job.backend->complete(build_prompt(request));
        result.model_verdict = parse_verdict(reply);
        if (result.model_verdict != outcome.detected) {
          ++entry.disagreements;
          spdlog::warn("backend '{}' run {} on '{}'/'{}': model verdict {} vs rule verdict {}",
                       job.backend->name(), run + 1, report.assurance_case, candidate.name,
                       result.model_verdict ? (*result.model_verdict ? "detected" : "not detected")
                                            : "missing",
                       outcome.detected ? "detected" : "not detected");
        }
      }
      if (result.outcome.detected) ++entry.detections;
      entry.runs.push_back(std::move(result));
    }
    entry.detected = entry.detections * 2 > job.runs;
    report.candidates.push_back(std::move(entry));
  }
  return report;
}

namespace {

std::size_t overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

}  // namespace

double precision(const std::set<std::string>& detected, const std::set<std::string>& truth) {
  if (detected.empty()) return 0.0;
  return static_cast<double>(overlap(detected, truth)) / static_cast<double>(detected.size());
}

double recall(const std::set<std::string>& detected, const std::set<std::string>& truth) {
  if (truth.empty()) throw Error(ErrorCode::kEmptyGroundTruth, "ground truth is empty");
  return static_cast<double>(overlap(detected, truth)) / static_cast<double>(truth.size());
}

double f_measure(double p, double r) {
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

std::vector<std::string> CorpusEntry::candidates() const {
  std::set<std::string> all = truth;
  all.insert(distractors.begin(), distractors.end());
  return {all.begin(), all.end()};
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, fmt::format("cannot read {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

constexpr std::string_view kProseSuffix = ".gsn.txt";

/// Files named <stem>.gsn.txt in a directory, keyed by stem.
std::map<std::string, fs::path> prose_files(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& item : fs::directory_iterator(dir)) {
    const std::string file = item.path().filename().string();
    if (!item.is_regular_file() || file.size() <= kProseSuffix.size() ||
        file.compare(file.size() - kProseSuffix.size(), kProseSuffix.size(), kProseSuffix) != 0) {
      continue;
    }
    out.emplace(file.substr(0, file.size() - kProseSuffix.size()), item.path());
  }
  return out;
}

ParseResult parse_file(const fs::path& path) {
  ParseResult result = parse(read_file(path));
  if (!result.ok()) {
    const auto first = std::find_if(result.diagnostics.begin(), result.diagnostics.end(),
                                    [](const Diagnostic& d) { return d.severity == Severity::kError; });
    throw Error(ErrorCode::kInvalidStructure, format_diagnostic(*first, path.string()));
  }
  return result;
}

}  // namespace

Corpus load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw Error(ErrorCode::kNotFound, fmt::format("corpus directory {} not found", dir.string()));
  }
  Corpus corpus;
  for (const auto& [name, path] : prose_files(dir / "patterns")) {
    ParseResult parsed = parse_file(path);
    if (parsed.kind != DocumentKind::kPattern) {
      throw Error(ErrorCode::kInvalidStructure, fmt::format("{} is not a pattern", path.string()));
    }
    corpus.patterns.emplace(name, parsed.pattern());
  }
  const auto cases = prose_files(dir / "cases");

  json truth;
  try {
    truth = json::parse(read_file(dir / "truth.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("truth.json: {}", e.what()));
  }
  try {
    for (const json& s : truth.at("systems")) {
      CorpusEntry entry;
      entry.system = s.at("system").get<std::string>();
      entry.case_name = s.at("case").get<std::string>();
      auto it = cases.find(entry.case_name);
      if (it == cases.end()) {
        throw Error(ErrorCode::kInvalidArgument,
                    fmt::format("truth.json names unknown case '{}'", entry.case_name));
      }
      entry.assurance_case = parse_file(it->second).structure;
      for (const auto& p : s.at("patterns")) entry.truth.insert(p.get<std::string>());
      for (const auto& p : s.value("distractors", json::array())) {
        entry.distractors.insert(p.get<std::string>());
      }
      if (entry.truth.empty()) {
        throw Error(ErrorCode::kEmptyGroundTruth,
                    fmt::format("system '{}' has no ground-truth patterns", entry.system));
      }
      for (const auto& name : entry.candidates()) {
        if (!corpus.patterns.count(name)) {
          throw Error(ErrorCode::kInvalidArgument,
                      fmt::format("system '{}' names unknown pattern '{}'", entry.system, name));
        }
      }
      const fs::path knowledge = dir / "knowledge" / (entry.case_name + ".json");
      if (fs::exists(knowledge)) {
        corpus.knowledge.emplace(entry.case_name, knowledge_from_json(json::parse(read_file(knowledge))));
      }
      corpus.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: {}", dir.string(), e.what()));
  }
  return corpus;
}

std::string format_score(double value) {
  std::string s = fmt::format("{:.2f}", value);
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

std::string EvaluationReport::to_table() const {
  std::vector<double> thresholds;
  for (const auto& row : rows) {
    if (std::find(thresholds.begin(), thresholds.end(), row.threshold) == thresholds.end()) {
      thresholds.push_back(row.threshold);
    }
  }
  std::sort(thresholds.begin(), thresholds.end());

  std::size_t system_width = 6;
  std::size_t backend_width = 7;
  for (const auto& row : rows) {
    system_width = std::max(system_width, row.system.size());
    backend_width = std::max(backend_width, row.backend.size());
  }
  constexpr std::size_t kCell = 5;
  const std::size_t group = 3 * kCell;

  std::string out = fmt::format("{:<{}}  {:<{}}", "System", system_width, "Backend", backend_width);
  for (double t : thresholds) out += fmt::format("  {:<{}}", "t=" + format_score(t), group);
  std::string units = fmt::format("{:<{}}  {:<{}}", "", system_width, "", backend_width);
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    units += fmt::format("  {:<{}}{:<{}}{:<{}}", "R", kCell, "P", kCell, "FM", kCell);
  }
  auto trim = [](std::string& line) {
    while (!line.empty() && line.back() == ' ') line.pop_back();
  };
  trim(out);
  trim(units);
  out += '\n' + units + '\n';

  std::size_t i = 0;
  while (i < rows.size()) {
    const std::string& system = rows[i].system;
    const std::string& backend = rows[i].backend;
    std::map<double, const EvaluationRow*> cells;
    while (i < rows.size() && rows[i].system == system && rows[i].backend == backend) {
      cells[rows[i].threshold] = &rows[i];
      ++i;
    }
    std::string line = fmt::format("{:<{}}  {:<{}}", system, system_width, backend, backend_width);
    for (double t : thresholds) {
      auto it = cells.find(t);
      if (it == cells.end()) {
        line += fmt::format("  {:<{}}", "-", group);
      } else if (it->second->failed) {
        line += fmt::format("  {:<{}}", "failed", group);
      } else {
        line += fmt::format("  {:<{}}{:<{}}{:<{}}", format_score(it->second->recall), kCell,
                            format_score(it->second->precision), kCell,
                            format_score(it->second->f_measure), kCell);
      }
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line;
    out += '\n';
  }
  return out;
}

std::string EvaluationReport::to_records() const {
  std::string out;
  for (const auto& row : rows) {
    out += to_json(row).dump();
    out += '\n';
  }
  return out;
}

EvaluationReport evaluate_corpus(const Corpus& corpus, const EvaluationOptions& options) {
  if (options.runs < 1) throw Error(ErrorCode::kInvalidArgument, "runs must be >= 1");
  if (options.thresholds.empty()) throw Error(ErrorCode::kInvalidArgument, "no thresholds given");
  if (options.backends.empty()) throw Error(ErrorCode::kInvalidArgument, "no backends given");
  for (double t : options.thresholds) check_threshold(t);

  std::vector<double> thresholds = options.thresholds;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  struct Cell {
    const CorpusEntry* entry;
    const NamedBackend* backend;
    double threshold;
  };
  std::vector<Cell> cells;
  for (const auto& entry : corpus.entries) {
    for (const auto& backend : options.backends) {
      for (double t : thresholds) cells.push_back({&entry, &backend, t});
    }
  }

  EvaluationReport report;
  report.rows.resize(cells.size());
  std::mutex guard;
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& cell = cells[i];
      EvaluationRow row;
      row.system = cell.entry->system;
      row.backend = cell.backend->name;
      row.threshold = cell.threshold;
      row.runs = options.runs;
      try {
        DetectionJob job;
        job.assurance_case = cell.entry->assurance_case;
        for (const auto& name : cell.entry->candidates()) {
          job.candidates.push_back({name, corpus.patterns.at(name)});
        }
        job.rule = options.rule.with_threshold(cell.threshold);
        job.runs = options.runs;
        job.backend = cell.backend->backend;
        const DetectionReport detection = detect(job);
        double r = 0;
        double p = 0;
        double f = 0;
        for (std::size_t run = 0; run < options.runs; ++run) {
          const auto found = detection.detected_in_run(run);
          const double pr = precision(found, cell.entry->truth);
          const double rc = recall(found, cell.entry->truth);
          p += pr;
          r += rc;
          f += f_measure(pr, rc);
        }
        const auto n = static_cast<double>(options.runs);
        row.recall = r / n;
        row.precision = p / n;
        row.f_measure = f / n;
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
        spdlog::warn("evaluation cell {}/{}/{} failed: {}", row.system, row.backend,
                     format_score(row.threshold), row.error);
      }
      std::lock_guard lock(guard);
      report.rows[i] = std::move(row);
    }
  };

  std::size_t workers = options.workers ? options.workers : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(cells.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return report;
}

}  // namespace gsnkit
