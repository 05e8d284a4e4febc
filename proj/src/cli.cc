#include "gsnkit/cli.h"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gsnkit/backend.h"
#include "gsnkit/detection.h"
#include "gsnkit/error.h"
#include "gsnkit/instantiation.h"
#include "gsnkit/json_codec.h"
#include "gsnkit/persistence.h"
#include "gsnkit/prose.h"
#include "gsnkit/render.h"
#include "gsnkit/service.h"

namespace gsnkit {

namespace fs = std::filesystem;

namespace {

/// Thrown for bad combinations CLI11 cannot express; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Domain failure already reported on stderr; exit code 1.
struct Reported : std::exception {};

std::string read_input(const std::string& path) {
  if (path == "-") {
    std::stringstream buffer;
    buffer << std::cin.rdbuf();
    return buffer.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, fmt::format("cannot read {}", path));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_output(const std::string& path, const std::string& data, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << data;
    return;
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file || !file.write(data.data(), static_cast<std::streamsize>(data.size()))) {
    throw Error(ErrorCode::kStoreUnwritable, fmt::format("cannot write {}", path));
  }
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// File name without directory and without .gsn.txt / .json / .txt.
std::string document_stem(const std::string& path) {
  std::string name = fs::path(path).filename().string();
  for (std::string_view suffix : {".gsn.txt", ".gsn.json", ".json", ".txt"}) {
    if (ends_with(name, suffix)) return name.substr(0, name.size() - suffix.size());
  }
  return name;
}

struct Document {
  GoalStructure structure;
  DocumentKind kind = DocumentKind::kAssuranceCase;
  std::vector<Diagnostic> diagnostics;
};

/// Reads prose or JSON (by extension, or by a leading '{').
Document read_document(const std::string& path, const std::string& format = "auto") {
  const std::string text = read_input(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  const bool json = format == "json" ||
                    (format == "auto" && (ends_with(path, ".json") ||
                                          (first != std::string::npos && text[first] == '{')));
  if (json) {
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: {}", path, e.what()));
    }
    return {structure_from_json(j), document_kind_from_json(j), {}};
  }
  ParseResult parsed = parse(text);
  return {std::move(parsed.structure), parsed.kind, std::move(parsed.diagnostics)};
}

void report_diagnostics(const std::vector<Diagnostic>& diagnostics, const std::string& source,
                        std::ostream& err) {
  for (const auto& d : diagnostics) err << format_diagnostic(d, source) << '\n';
}

bool has_error_diagnostic(const std::vector<Diagnostic>& diagnostics) {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::kError; });
}

void report_violations(const std::vector<Violation>& violations, const std::string& source,
                       std::ostream& err) {
  for (const auto& v : violations) {
    std::string ids;
    for (const auto& id : v.ids) ids += (ids.empty() ? "" : ",") + id;
    err << fmt::format("{}: {}: {} [{}]{}\n", source, to_string(v.severity), v.message,
                       to_string(v.code), ids.empty() ? "" : " (" + ids + ")");
  }
}

/// Parse diagnostics and Error violations go to stderr; throws Reported.
Document require_document(const std::string& path, std::ostream& err) {
  Document doc = read_document(path);
  if (has_error_diagnostic(doc.diagnostics)) {
    report_diagnostics(doc.diagnostics, path, err);
    throw Reported{};
  }
  const auto violations = validate(doc.structure);
  if (has_errors(violations)) {
    report_violations(violations, path, err);
    throw Reported{};
  }
  return doc;
}

std::vector<GenerationBackendConfig> backend_configs(const std::string& path) {
  if (!path.empty()) return load_backend_configs(path);
  if (const char* env = std::getenv("GSNKIT_BACKENDS"); env && *env) return load_backend_configs(env);
  return {};
}

std::string rule_text(const DetectionRule& rule) {
  std::string out;
  for (const auto& c : rule.clauses()) {
    out += fmt::format("{}{} >= {}", out.empty() ? "" : " AND ", c.metric, format_score(c.threshold));
  }
  return out;
}

std::string render(const GoalStructure& structure, DocumentKind kind, const std::string& format) {
  if (format == "prose") {
    return kind == DocumentKind::kPattern ? serialize(PatternDocument(structure)).str()
                                          : serialize(structure, kind).str();
  }
  if (format == "json") {
    const Json j = kind == DocumentKind::kPattern ? to_json(PatternDocument(structure))
                                                  : to_json(structure, kind);
    return j.dump(2) + "\n";
  }
  if (format == "dot") return export_dot(structure);
  if (format == "svg") return export_svg(structure);
  throw UsageError(fmt::format("unknown format '{}'", format));
}

std::string format_from_path(const std::string& path) {
  if (ends_with(path, ".json")) return "json";
  if (ends_with(path, ".dot") || ends_with(path, ".gv")) return "dot";
  if (ends_with(path, ".svg")) return "svg";
  return "prose";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBackendUnavailable:
    case ErrorCode::kBackendRefusal:
    case ErrorCode::kReplyUnparseable:
      return kExitBackendFailure;
    case ErrorCode::kThresholdOutOfRange:
    case ErrorCode::kMissingInput:
      return kExitUsage;
    default:
      return kExitDomainFailure;
  }
}

std::atomic<Service*> g_service{nullptr};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"gsnkit: GSN assurance cases and patterns from the command line", "gsnkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("gsnkit 1.0.0"));
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log debug output to stderr");

  const auto unit = CLI::Range(0.0, 1.0);

  // convert
  auto* convert = app.add_subcommand("convert", "Convert between prose, JSON, DOT and SVG");
  std::string convert_in;
  std::string convert_out;
  std::string convert_to;
  std::string convert_from = "auto";
  convert->add_option("input", convert_in, "Input file (prose or JSON), '-' for stdin")->required();
  convert->add_option("-o,--output", convert_out, "Output file (default stdout)");
  convert->add_option("--to", convert_to, "prose | json | dot | svg (default from output extension)")
      ->check(CLI::IsMember({"prose", "json", "dot", "svg"}));
  convert->add_option("--from", convert_from, "auto | prose | json")
      ->check(CLI::IsMember({"auto", "prose", "json"}));

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "Check GSN rules; exit 0 iff no errors");
  std::vector<std::string> validate_in;
  bool validate_json = false;
  validate_cmd->add_option("inputs", validate_in, "Files to check")->required();
  validate_cmd->add_flag("--json", validate_json, "Print violations as JSON");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Element, relationship and placeholder counts");
  std::vector<std::string> stats_in;
  stats_cmd->add_option("inputs", stats_in, "Files to count")->required();

  // detect
  auto* detect_cmd = app.add_subcommand("detect", "Detect patterns in an assurance case");
  std::vector<std::string> detect_patterns;
  std::string detect_case;
  std::optional<double> threshold;
  std::optional<double> threshold_bleu;
  std::optional<double> threshold_cosine;
  std::size_t detect_runs = 1;
  std::string detect_backend = "deterministic";
  std::string detect_config;
  bool detect_json = false;
  detect_cmd->add_option("--pattern", detect_patterns, "Candidate pattern file (repeatable)")->required();
  detect_cmd->add_option("--case", detect_case, "Assurance case file")->required();
  auto* t_opt = detect_cmd->add_option("--threshold", threshold, "Threshold for every metric")->check(unit);
  detect_cmd->add_option("--threshold-bleu", threshold_bleu, "BLEU threshold")->check(unit)->excludes(t_opt);
  detect_cmd->add_option("--threshold-cosine", threshold_cosine, "Cosine threshold")->check(unit)->excludes(t_opt);
  detect_cmd->add_option("--runs", detect_runs, "Runs per candidate")->check(CLI::PositiveNumber);
  detect_cmd->add_option("--backend", detect_backend,
                         "deterministic, a configured backend name, or mock:<reply file>");
  detect_cmd->add_option("--backend-config", detect_config, "Backend configuration JSON");
  detect_cmd->add_flag("--json", detect_json, "Print the full report as JSON");

  // instantiate
  auto* inst_cmd = app.add_subcommand("instantiate", "Instantiate a pattern for a system");
  std::string inst_pattern;
  std::string inst_knowledge;
  std::string inst_backend = "substitute";
  std::string inst_config;
  std::string inst_out;
  std::string inst_format = "prose";
  inst_cmd->add_option("--pattern", inst_pattern, "Pattern file")->required();
  inst_cmd->add_option("--knowledge", inst_knowledge, "Domain knowledge JSON")->required();
  inst_cmd->add_option("--backend", inst_backend,
                       "substitute, a configured backend name, or mock:<reply file>");
  inst_cmd->add_option("--backend-config", inst_config, "Backend configuration JSON");
  inst_cmd->add_option("-o,--output", inst_out, "Output file (default stdout)");
  inst_cmd->add_option("--format", inst_format, "prose | json")->check(CLI::IsMember({"prose", "json"}));

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Run the multi-threshold evaluation over a corpus");
  std::string eval_corpus;
  std::vector<double> eval_thresholds = kDefaultThresholds;
  std::size_t eval_runs = kDefaultRuns;
  std::vector<std::string> eval_backends = {"deterministic"};
  std::string eval_config;
  std::string eval_report;
  std::size_t eval_workers = 0;
  eval_cmd->add_option("--corpus", eval_corpus, "Corpus directory")->required();
  eval_cmd->add_option("--thresholds", eval_thresholds, "Comma-separated thresholds")
      ->delimiter(',')
      ->check(unit);
  eval_cmd->add_option("--runs", eval_runs, "Runs per cell")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--backend", eval_backends, "Backend names (repeatable)");
  eval_cmd->add_option("--backend-config", eval_config, "Backend configuration JSON");
  eval_cmd->add_option("--report", eval_report, "Write JSON-lines records to this file");
  eval_cmd->add_option("--workers", eval_workers, "Parallel cells (default: hardware threads)");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP JSON API");
  ServiceConfig service;
  std::optional<std::string> serve_store;
  std::string serve_config;
  std::string token_env = "GSNKIT_TOKEN";
  serve_cmd->add_option("--host", service.host, "Bind address");
  serve_cmd->add_option("--port", service.port, "Port (0 picks one)")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--store", serve_store, "Project store root (default $GSNKIT_STORE)");
  serve_cmd->add_option("--corpus", service.corpus_dir, "Corpus for evaluate and corpus detect");
  serve_cmd->add_option("--token-env", token_env, "Environment variable holding the bearer token");
  serve_cmd->add_option("--cors-origin", service.cors_origin, "Allowed browser origin");
  serve_cmd->add_option("--backend-config", serve_config, "Backend configuration JSON");

  // projects
  auto* proj_cmd = app.add_subcommand("projects", "Inspect and prune the project store");
  proj_cmd->require_subcommand(1);
  std::optional<std::string> proj_store;
  proj_cmd->add_option("--store", proj_store, "Project store root (default $GSNKIT_STORE)");
  auto* proj_list = proj_cmd->add_subcommand("list", "List projects");
  auto* proj_history = proj_cmd->add_subcommand("history", "Revisions of a project, oldest first");
  std::string proj_name;
  proj_history->add_option("name", proj_name)->required();
  auto* proj_prune = proj_cmd->add_subcommand("prune", "Drop old revisions");
  std::size_t prune_keep = 0;
  proj_prune->add_option("name", proj_name)->required();
  proj_prune->add_option("--keep", prune_keep, "Recent revisions to keep besides HEAD");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (*convert) {
      Document doc = read_document(convert_in, convert_from);
      if (has_error_diagnostic(doc.diagnostics)) {
        report_diagnostics(doc.diagnostics, convert_in, err);
        return kExitDomainFailure;
      }
      const std::string to = convert_to.empty() ? format_from_path(convert_out) : convert_to;
      if (to != "json") {
        const auto violations = validate(doc.structure);
        if (has_errors(violations)) {
          report_violations(violations, convert_in, err);
          return kExitDomainFailure;
        }
      }
      write_output(convert_out, render(doc.structure, doc.kind, to), out);
      return kExitOk;
    }

    if (*validate_cmd) {
      bool ok = true;
      Json all = Json::array();
      for (const auto& path : validate_in) {
        Document doc = read_document(path);
        const auto violations = validate(doc.structure);
        const bool parse_ok = !has_error_diagnostic(doc.diagnostics);
        ok = ok && parse_ok && !has_errors(violations);
        if (validate_json) {
          Json entry = {{"file", path}, {"valid", parse_ok && !has_errors(violations)}};
          entry["diagnostics"] = Json::array();
          for (const auto& d : doc.diagnostics) entry["diagnostics"].push_back(to_json(d));
          entry["violations"] = Json::array();
          for (const auto& v : violations) entry["violations"].push_back(to_json(v));
          all.push_back(std::move(entry));
        } else if (!parse_ok) {
          report_diagnostics(doc.diagnostics, path, err);
        } else {
          report_violations(violations, path, err);
          if (!has_errors(violations)) out << path << ": ok\n";
        }
      }
      if (validate_json) out << all.dump(2) << '\n';
      return ok ? kExitOk : kExitDomainFailure;
    }

    if (*stats_cmd) {
      out << fmt::format("{:<32} {:>8} {:>13} {:>12} {:>11}\n", "file", "elements", "relationships",
                         "placeholders", "undeveloped");
      for (const auto& path : stats_in) {
        const Document doc = require_document(path, err);
        const StructureStats s = statistics(doc.structure);
        out << fmt::format("{:<32} {:>8} {:>13} {:>12} {:>11}\n", document_stem(path), s.elements,
                           s.relationships, s.placeholders, s.undeveloped);
      }
      return kExitOk;
    }

    if (*detect_cmd) {
      if (!threshold && (!threshold_bleu || !threshold_cosine)) {
        throw UsageError("give --threshold, or both --threshold-bleu and --threshold-cosine");
      }
      DetectionJob job;
      job.rule = threshold ? DetectionRule::uniform(*threshold)
                           : DetectionRule::bleu_cosine(*threshold_bleu, *threshold_cosine);
      job.runs = detect_runs;
      job.assurance_case = require_document(detect_case, err).structure;
      for (const auto& path : detect_patterns) {
        job.candidates.push_back({document_stem(path), PatternDocument(require_document(path, err).structure)});
      }
      if (detect_backend != "deterministic") {
        job.backend = resolve_backend(detect_backend, backend_configs(detect_config));
      }
      const DetectionReport report = detect(job);
      if (detect_json) {
        Json j = to_json(report);
        j["rule"] = to_json(job.rule);
        out << j.dump(2) << '\n';
        return kExitOk;
      }
      out << fmt::format("case: {}\nrule: {}\nruns: {}\n", report.assurance_case, rule_text(job.rule),
                         job.runs);
      std::size_t width = 7;
      for (const auto& c : report.candidates) width = std::max(width, c.pattern.size());
      std::string header = fmt::format("{:<{}}", "pattern", width);
      for (const auto& clause : job.rule.clauses()) header += fmt::format("  {:>8}", clause.metric);
      out << header << "  verdict       runs\n";
      for (const auto& c : report.candidates) {
        std::string line = fmt::format("{:<{}}", c.pattern, width);
        for (const auto& r : c.runs.front().outcome.results) line += fmt::format("  {:>8.4f}", r.value);
        line += fmt::format("  {:<12}  {}/{}", c.detected ? "detected" : "not detected", c.detections,
                            c.runs.size());
        if (job.backend) line += fmt::format("  disagreements {}", c.disagreements);
        out << line << '\n';
      }
      return kExitOk;
    }

    if (*inst_cmd) {
      const PatternDocument pattern(require_document(inst_pattern, err).structure);
      Json kj;
      try {
        kj = Json::parse(read_input(inst_knowledge));
      } catch (const Json::exception& e) {
        throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: {}", inst_knowledge, e.what()));
      }
      const DomainKnowledge knowledge = knowledge_from_json(kj);
      GoalStructure structure;
      if (inst_backend == "substitute") {
        knowledge.check(true);
        structure = substitute(pattern, knowledge.bindings);
        if (!knowledge.system.empty()) structure = structure.with_name(knowledge.system);
      } else {
        auto backend = resolve_backend(inst_backend, backend_configs(inst_config));
        GenerationResult result = generate_case(pattern, knowledge, *backend);
        if (!result.ok()) {
          report_diagnostics(result.diagnostics, "reply", err);
          err << "raw reply kept for manual refinement\n";
          write_output(inst_out, result.raw_reply, out);
          return kExitDomainFailure;
        }
        report_diagnostics(result.diagnostics, "reply", err);
        structure = std::move(result.structure);
      }
      const auto violations = validate(structure);
      report_violations(violations, "result", err);
      if (has_errors(violations)) return kExitDomainFailure;
      write_output(inst_out, render(structure, DocumentKind::kAssuranceCase, inst_format), out);
      return kExitOk;
    }

    if (*eval_cmd) {
      const Corpus corpus = load_corpus(eval_corpus);
      EvaluationOptions options;
      options.thresholds = eval_thresholds;
      options.runs = eval_runs;
      options.workers = eval_workers;
      options.backends.clear();
      const auto configs = backend_configs(eval_config);
      for (const auto& name : eval_backends) {
        options.backends.push_back({name, name == "deterministic" ? nullptr : resolve_backend(name, configs)});
      }
      const EvaluationReport report = evaluate_corpus(corpus, options);
      out << report.to_table();
      if (!eval_report.empty()) write_output(eval_report, report.to_records(), out);
      const bool failed = std::any_of(report.rows.begin(), report.rows.end(),
                                      [](const EvaluationRow& r) { return r.failed; });
      return failed ? kExitBackendFailure : kExitOk;
    }

    if (*serve_cmd) {
      service.store_root = ProjectStore::resolve_root(serve_store);
      if (const char* token = std::getenv(token_env.c_str()); token && *token) service.token = token;
      service.backends = backend_configs(serve_config);
      if (service.token.empty()) spdlog::warn("no bearer token set; the API is unauthenticated");

      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);

      Service server(service);
      const int port = server.bind();
      err << fmt::format("listening on http://{}:{}\n", service.host, port);
      g_service = &server;
      std::thread waiter([&signals] {
        int sig = 0;
        sigwait(&signals, &sig);
        if (Service* s = g_service.load()) s->stop();
      });
      server.run();
      g_service = nullptr;
      pthread_kill(waiter.native_handle(), SIGTERM);
      waiter.join();
      return kExitOk;
    }

    if (*proj_cmd) {
      const ProjectStore store(ProjectStore::resolve_root(proj_store));
      if (*proj_list) {
        for (const auto& name : store.list()) out << name << '\n';
      } else if (*proj_history) {
        const auto head = store.head(proj_name);
        for (const auto& r : store.history(proj_name)) {
          out << fmt::format("{} {}{}\n", r.id, r.modified, head == r.id ? " HEAD" : "");
        }
      } else if (*proj_prune) {
        out << fmt::format("removed {} revisions\n", store.prune(proj_name, prune_keep));
      }
      return kExitOk;
    }
  } catch (const Reported&) {
    return kExitDomainFailure;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n" << "Run with --help for more information.\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << error_code_name(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainFailure;
  }
  return kExitUsage;
}

}  // namespace gsnkit
