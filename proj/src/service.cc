#include "gsnkit/service.h"

#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include <fmt/format.h>
#include <openssl/crypto.h>
#include <spdlog/spdlog.h>

#include "httplib.h"

#include "gsnkit/detection.h"
#include "gsnkit/error.h"
#include "gsnkit/instantiation.h"
#include "gsnkit/json_codec.h"
#include "gsnkit/persistence.h"
#include "gsnkit/prose.h"
#include "gsnkit/render.h"

namespace gsnkit {

namespace {

constexpr const char* kJsonType = "application/json";

struct ApiError : std::runtime_error {
  ApiError(std::string code, const std::string& message, Json details = Json::object())
      : std::runtime_error(message), code(std::move(code)), details(std::move(details)) {}
  std::string code;
  Json details;
};

Json error_body(std::string_view code, std::string_view message, const Json& details) {
  return {{"error", {{"code", code}, {"message", message}, {"details", details}}}};
}

void send(httplib::Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), kJsonType);
}

void send_error(httplib::Response& res, std::string_view code, std::string_view message,
                const Json& details = Json::object()) {
  send(res, error_body(code, message, details), api_error_status(code));
}

Json body_json(const httplib::Request& req) {
  Json body;
  try {
    body = Json::parse(req.body.empty() ? std::string("{}") : req.body);
  } catch (const Json::exception& e) {
    throw ApiError("MalformedJson", fmt::format("request body is not JSON: {}", e.what()));
  }
  if (!body.is_object()) throw ApiError("MalformedJson", "request body must be a JSON object");
  return body;
}

/// Runs `fn` with codec errors reported under `prefix`.
template <typename Fn>
auto nested(const std::string& prefix, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.field().empty() || e.code() != ErrorCode::kInvalidArgument) throw;
    const std::string field = fmt::format("{}.{}", prefix, e.field());
    throw Error(e.code(), fmt::format("{}: {}", prefix, e.what()), field);
  }
}

const Json& require(const Json& body, std::string_view key) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) {
    throw Error(ErrorCode::kMissingInput, fmt::format("'{}' is required", key), std::string(key));
  }
  return *it;
}

std::string require_string(const Json& body, std::string_view key) {
  const Json& v = require(body, key);
  if (!v.is_string()) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("'{}' must be a string", key), std::string(key));
  }
  return v.get<std::string>();
}

std::optional<std::string> optional_string(const Json& body, std::string_view key) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("'{}' must be a string", key), std::string(key));
  }
  return it->get<std::string>();
}

std::size_t positive_count(const Json& body, std::string_view key, std::size_t fallback) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return fallback;
  if (!it->is_number_integer() || it->get<long long>() < 1) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("'{}' must be an integer >= 1", key),
                std::string(key));
  }
  return it->get<std::size_t>();
}

Json diagnostics_json(const std::vector<Diagnostic>& diagnostics) {
  Json out = Json::array();
  for (const auto& d : diagnostics) out.push_back(to_json(d));
  return out;
}

Json violations_json(const std::vector<Violation>& violations) {
  Json out = Json::array();
  for (const auto& v : violations) out.push_back(to_json(v));
  return out;
}

/// Structure from {"structure": {...}} or {"text": "..."} (keys configurable).
std::pair<GoalStructure, DocumentKind> structure_input(const Json& body,
                                                       std::string_view structure_key = "structure",
                                                       std::string_view text_key = "text") {
  if (auto it = body.find(structure_key); it != body.end() && !it->is_null()) {
    const std::string key(structure_key);
    return nested(key, [&] {
      return std::pair{structure_from_json(*it), document_kind_from_json(*it)};
    });
  }
  if (auto text = optional_string(body, text_key)) {
    ParseResult parsed = parse(*text);
    if (!parsed.ok()) {
      throw ApiError("InvalidStructure", fmt::format("'{}' does not parse", text_key),
                     {{"diagnostics", diagnostics_json(parsed.diagnostics)}});
    }
    return {std::move(parsed.structure), parsed.kind};
  }
  throw Error(ErrorCode::kMissingInput,
              fmt::format("either '{}' or '{}' is required", structure_key, text_key),
              std::string(structure_key));
}

void require_valid(const GoalStructure& structure, std::string_view what) {
  const auto violations = validate(structure);
  if (has_errors(violations)) {
    throw ApiError("InvalidStructure", fmt::format("{} violates GSN rules", what),
                   {{"violations", violations_json(violations)}});
  }
}

PatternDocument pattern_input(const Json& body, std::string_view structure_key,
                              std::string_view text_key) {
  auto [structure, kind] = structure_input(body, structure_key, text_key);
  (void)kind;
  return PatternDocument(std::move(structure));
}

Json project_json(const Project& project, const std::string& revision) {
  Json cases = Json::object();
  for (const auto& [k, v] : project.cases) cases[k] = to_json(v);
  Json patterns = Json::object();
  for (const auto& [k, v] : project.patterns) patterns[k] = to_json(v);
  Json knowledge = Json::object();
  for (const auto& [k, v] : project.knowledge) knowledge[k] = to_json(v);
  Json reports = Json::object();
  for (const auto& [k, v] : project.reports) reports[k] = to_json(v);
  return {{"name", project.name},         {"created", project.created},
          {"modified", project.modified}, {"revision", revision},
          {"cases", std::move(cases)},    {"patterns", std::move(patterns)},
          {"knowledge", std::move(knowledge)}, {"reports", std::move(reports)}};
}

struct Job {
  std::string status = "running";
  std::optional<EvaluationReport> report;
  std::string error;
};

}  // namespace

const std::vector<std::string>& api_error_codes() {
  static const std::vector<std::string> codes = {
      "InvalidArgument",  "InvalidStructure", "MalformedPlaceholder", "EmptyText",
      "InvalidRule",      "ThresholdOutOfRange", "EmptyGroundTruth", "MissingInput",
      "BackendUnavailable", "BackendRefusal", "ReplyUnparseable",     "StoreUnwritable",
      "NotFound",         "CorruptStore",     "Conflict",             "MalformedJson",
      "Unauthorized",     "MethodNotAllowed", "Internal"};
  return codes;
}

int api_error_status(std::string_view code) {
  static const std::map<std::string, int, std::less<>> statuses = {
      {"InvalidArgument", 400},    {"InvalidStructure", 422},   {"MalformedPlaceholder", 422},
      {"EmptyText", 422},          {"InvalidRule", 400},        {"ThresholdOutOfRange", 400},
      {"EmptyGroundTruth", 422},   {"MissingInput", 400},       {"BackendUnavailable", 502},
      {"BackendRefusal", 502},     {"ReplyUnparseable", 502},   {"StoreUnwritable", 500},
      {"NotFound", 404},           {"CorruptStore", 500},       {"Conflict", 409},
      {"MalformedJson", 400},      {"Unauthorized", 401},       {"MethodNotAllowed", 405},
      {"Internal", 500}};
  auto it = statuses.find(code);
  return it == statuses.end() ? 500 : it->second;
}

struct Service::Impl {
  explicit Impl(ServiceConfig c) : config(std::move(c)), store(config.store_root) {}

  ~Impl() {
    server.stop();
    std::vector<std::thread> pending;
    {
      std::lock_guard lock(jobs_mutex);
      pending.swap(workers);
    }
    for (auto& t : pending) t.join();
  }

  ServiceConfig config;
  ProjectStore store;
  httplib::Server server;
  int port = 0;

  std::mutex backends_mutex;
  std::map<std::string, std::shared_ptr<GenerationBackend>> backends;

  std::mutex corpus_mutex;
  std::optional<Corpus> corpus;

  std::mutex projects_mutex;
  std::map<std::string, std::unique_ptr<std::mutex>> project_locks;

  std::mutex jobs_mutex;
  std::map<std::string, Job> jobs;
  std::vector<std::thread> workers;
  std::size_t next_job = 1;

  std::shared_ptr<GenerationBackend> backend(const std::string& name) {
    std::lock_guard lock(backends_mutex);
    auto it = backends.find(name);
    if (it != backends.end()) return it->second;
    for (const auto& c : config.backends) {
      if (c.name == name) {
        auto made = std::make_shared<ChatCompletionBackend>(c);
        backends.emplace(name, made);
        return made;
      }
    }
    throw Error(ErrorCode::kNotFound, fmt::format("no backend named '{}' is configured", name),
                "backend");
  }

  const Corpus& bundled_corpus() {
    std::lock_guard lock(corpus_mutex);
    if (!corpus) {
      if (config.corpus_dir.empty()) throw Error(ErrorCode::kNotFound, "no corpus is configured");
      corpus = load_corpus(config.corpus_dir);
    }
    return *corpus;
  }

  std::mutex& project_lock(const std::string& name) {
    std::lock_guard lock(projects_mutex);
    auto& slot = project_locks[name];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
  }

  /// Load-modify-save under the project's write lock.
  template <typename Fn>
  std::string mutate(const std::string& name, Fn&& fn) {
    std::lock_guard lock(project_lock(name));
    Project project = store.load(name);
    fn(project);
    project.modified = std::max(now_ms(), project.created);
    return store.save(project);
  }

  void routes();
  void handle_detect(const httplib::Request& req, httplib::Response& res);
  void handle_instantiate(const httplib::Request& req, httplib::Response& res);
  void handle_evaluate(const httplib::Request& req, httplib::Response& res);
  void handle_item(const httplib::Request& req, httplib::Response& res);
};

void Service::Impl::handle_detect(const httplib::Request& req, httplib::Response& res) {
  const Json body = body_json(req);

  DetectionRule rule = [&] {
    if (body.contains("rule")) return nested("rule", [&] { return rule_from_json(body["rule"]); });
    if (body.contains("thresholds")) {
      return nested("thresholds", [&] { return rule_from_json(body["thresholds"]); });
    }
    if (body.contains("threshold")) {
      return nested("", [&] { return rule_from_json({{"threshold", body["threshold"]}}); });
    }
    throw Error(ErrorCode::kMissingInput, "one of 'rule', 'thresholds' or 'threshold' is required",
                "thresholds");
  }();

  DetectionJob job;
  job.rule = std::move(rule);
  job.runs = positive_count(body, "runs", 1);
  const std::string backend_name = optional_string(body, "backend").value_or("deterministic");
  if (backend_name != "deterministic") job.backend = backend(backend_name);

  std::vector<std::string> names;
  if (auto it = body.find("pattern_names"); it != body.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::kInvalidArgument, "'pattern_names' must be an array", "pattern_names");
    for (const auto& n : *it) {
      if (!n.is_string()) throw Error(ErrorCode::kInvalidArgument, "pattern names are strings", "pattern_names");
      names.push_back(n.get<std::string>());
    }
  }

  if (auto corpus_case = optional_string(body, "corpus_case")) {
    const Corpus& c = bundled_corpus();
    auto entry = std::find_if(c.entries.begin(), c.entries.end(), [&](const CorpusEntry& e) {
      return e.case_name == *corpus_case || e.system == *corpus_case;
    });
    if (entry == c.entries.end()) {
      throw Error(ErrorCode::kNotFound, fmt::format("corpus has no case '{}'", *corpus_case), "corpus_case");
    }
    job.assurance_case = entry->assurance_case;
    if (names.empty()) names = entry->candidates();
    for (const auto& n : names) {
      auto p = c.patterns.find(n);
      if (p == c.patterns.end()) throw Error(ErrorCode::kNotFound, fmt::format("corpus has no pattern '{}'", n), "pattern_names");
      job.candidates.push_back({n, p->second});
    }
  } else if (auto project_name = optional_string(body, "project")) {
    const Project project = store.load(*project_name);
    const std::string case_name = require_string(body, "case_name");
    auto it = project.cases.find(case_name);
    if (it == project.cases.end()) {
      throw Error(ErrorCode::kNotFound, fmt::format("project has no case '{}'", case_name), "case_name");
    }
    job.assurance_case = it->second;
    if (names.empty()) {
      for (const auto& [n, _] : project.patterns) names.push_back(n);
    }
    for (const auto& n : names) {
      auto p = project.patterns.find(n);
      if (p == project.patterns.end()) throw Error(ErrorCode::kNotFound, fmt::format("project has no pattern '{}'", n), "pattern_names");
      job.candidates.push_back({n, p->second});
    }
  } else {
    job.assurance_case = structure_input(body, "case", "case_text").first;
    const Json& patterns = require(body, "patterns");
    if (!patterns.is_array()) throw Error(ErrorCode::kInvalidArgument, "'patterns' must be an array", "patterns");
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      const std::string prefix = fmt::format("patterns[{}]", i);
      if (!patterns[i].is_object()) throw Error(ErrorCode::kInvalidArgument, "pattern entries are objects", prefix);
      const std::string name = nested(prefix, [&] {
        auto n = optional_string(patterns[i], "name");
        return n.value_or(fmt::format("pattern{}", i + 1));
      });
      PatternDocument pattern = nested(prefix, [&] { return pattern_input(patterns[i], "structure", "text"); });
      job.candidates.push_back({name, std::move(pattern)});
    }
  }
  if (job.candidates.empty()) throw Error(ErrorCode::kMissingInput, "no candidate patterns", "patterns");
  require_valid(job.assurance_case, "case");
  for (const auto& c : job.candidates) require_valid(c.pattern.structure(), fmt::format("pattern '{}'", c.name));

  const DetectionReport report = detect(job);
  Json out = to_json(report);
  out["rule"] = to_json(job.rule);
  out["runs"] = job.runs;
  out["backend"] = backend_name;
  const auto found = report.detected();
  out["detected"] = Json(std::vector<std::string>(found.begin(), found.end()));
  send(res, out);
}

void Service::Impl::handle_instantiate(const httplib::Request& req, httplib::Response& res) {
  const Json body = body_json(req);
  std::optional<Project> project;
  if (auto name = optional_string(body, "project")) project = store.load(*name);

  PatternDocument pattern;
  if (auto pattern_name = optional_string(body, "pattern_name")) {
    if (!project) throw Error(ErrorCode::kMissingInput, "'pattern_name' needs 'project'", "project");
    auto it = project->patterns.find(*pattern_name);
    if (it == project->patterns.end()) throw Error(ErrorCode::kNotFound, fmt::format("project has no pattern '{}'", *pattern_name), "pattern_name");
    pattern = it->second;
  } else {
    pattern = pattern_input(body, "pattern", "pattern_text");
  }
  require_valid(pattern.structure(), "pattern");

  DomainKnowledge knowledge;
  if (auto knowledge_name = optional_string(body, "knowledge_name")) {
    if (!project) throw Error(ErrorCode::kMissingInput, "'knowledge_name' needs 'project'", "project");
    auto it = project->knowledge.find(*knowledge_name);
    if (it == project->knowledge.end()) throw Error(ErrorCode::kNotFound, fmt::format("project has no knowledge '{}'", *knowledge_name), "knowledge_name");
    knowledge = it->second;
  } else {
    knowledge = nested("knowledge", [&] { return knowledge_from_json(require(body, "knowledge")); });
  }

  const std::string backend_name = optional_string(body, "backend").value_or("substitute");
  GoalStructure structure;
  std::vector<Diagnostic> diagnostics;
  Json raw = nullptr;
  if (backend_name == "substitute") {
    knowledge.check(true);
    structure = substitute(pattern, knowledge.bindings);
    if (!knowledge.system.empty()) structure = structure.with_name(knowledge.system);
  } else {
    GenerationResult result = generate_case(pattern, knowledge, *backend(backend_name));
    structure = std::move(result.structure);
    diagnostics = std::move(result.diagnostics);
    raw = result.raw_reply;
  }
  const auto violations = validate(structure);
  const bool ok = !has_errors(violations) &&
                  std::none_of(diagnostics.begin(), diagnostics.end(),
                               [](const Diagnostic& d) { return d.severity == Severity::kError; });
  Json out = {{"structure", to_json(structure)},
              {"diagnostics", diagnostics_json(diagnostics)},
              {"violations", violations_json(violations)},
              {"ok", ok},
              {"raw_reply", raw},
              {"text", ok ? Json(serialize(structure).str()) : Json(nullptr)}};
  if (auto save_as = optional_string(body, "save_as")) {
    if (!project) throw Error(ErrorCode::kMissingInput, "'save_as' needs 'project'", "project");
    if (!ok) require_valid(structure, "generated case");
    out["revision"] = mutate(project->name, [&](Project& p) { p.cases[*save_as] = structure; });
  }
  send(res, out);
}

void Service::Impl::handle_evaluate(const httplib::Request& req, httplib::Response& res) {
  const Json body = body_json(req);
  EvaluationOptions options;
  if (auto it = body.find("thresholds"); it != body.end() && !it->is_null()) {
    if (!it->is_array() || it->empty()) {
      throw Error(ErrorCode::kInvalidArgument, "'thresholds' must be a non-empty array", "thresholds");
    }
    options.thresholds.clear();
    for (const auto& t : *it) {
      if (!t.is_number()) throw Error(ErrorCode::kInvalidArgument, "thresholds are numbers", "thresholds");
      check_threshold(t.get<double>());
      options.thresholds.push_back(t.get<double>());
    }
  }
  options.runs = positive_count(body, "runs", kDefaultRuns);
  if (auto it = body.find("backends"); it != body.end() && !it->is_null()) {
    if (!it->is_array() || it->empty()) {
      throw Error(ErrorCode::kInvalidArgument, "'backends' must be a non-empty array", "backends");
    }
    options.backends.clear();
    for (const auto& b : *it) {
      if (!b.is_string()) throw Error(ErrorCode::kInvalidArgument, "backend names are strings", "backends");
      const std::string name = b.get<std::string>();
      options.backends.push_back({name, name == "deterministic" ? nullptr : backend(name)});
    }
  }
  const auto project = optional_string(body, "project");
  const std::string report_name = optional_string(body, "report_name").value_or("evaluation");
  if (project && !store.exists(*project)) {
    throw Error(ErrorCode::kNotFound, fmt::format("no project named '{}'", *project), "project");
  }
  const Corpus corpus = bundled_corpus();

  std::string id;
  {
    std::lock_guard lock(jobs_mutex);
    id = fmt::format("job-{}", next_job++);
    jobs.emplace(id, Job{});
    workers.emplace_back([this, id, options, corpus, project, report_name] {
      Job done;
      try {
        EvaluationReport report = evaluate_corpus(corpus, options);
        if (project) mutate(*project, [&](Project& p) { p.reports[report_name] = report; });
        done.status = "done";
        done.report = std::move(report);
      } catch (const std::exception& e) {
        done.status = "failed";
        done.error = e.what();
      }
      std::lock_guard lock(jobs_mutex);
      jobs[id] = std::move(done);
    });
  }
  send(res, {{"job", id}, {"status", "running"}}, 202);
}

void Service::Impl::handle_item(const httplib::Request& req, httplib::Response& res) {
  const std::string project = req.path_params.at("project");
  const std::string category = req.path_params.at("category");
  const std::string item = req.path_params.at("item");
  if (category != "cases" && category != "patterns" && category != "knowledge" &&
      category != "reports") {
    throw Error(ErrorCode::kNotFound, fmt::format("unknown collection '{}'", category));
  }
  auto missing = [&] {
    return Error(ErrorCode::kNotFound, fmt::format("project '{}' has no {} '{}'", project, category, item));
  };

  if (req.method == "GET") {
    const Project p = store.load(project, req.has_param("revision") ? std::optional(req.get_param_value("revision")) : std::nullopt);
    if (category == "cases") {
      auto it = p.cases.find(item);
      if (it == p.cases.end()) throw missing();
      Json out = to_json(it->second);
      out["text"] = serialize(it->second).str();
      return send(res, out);
    }
    if (category == "patterns") {
      auto it = p.patterns.find(item);
      if (it == p.patterns.end()) throw missing();
      Json out = to_json(it->second);
      out["text"] = serialize(it->second).str();
      return send(res, out);
    }
    if (category == "knowledge") {
      auto it = p.knowledge.find(item);
      if (it == p.knowledge.end()) throw missing();
      return send(res, to_json(it->second));
    }
    auto it = p.reports.find(item);
    if (it == p.reports.end()) throw missing();
    return send(res, to_json(it->second));
  }

  if (req.method == "DELETE") {
    const std::string revision = mutate(project, [&](Project& p) {
      const std::size_t erased = category == "cases"      ? p.cases.erase(item)
                                 : category == "patterns" ? p.patterns.erase(item)
                                 : category == "knowledge" ? p.knowledge.erase(item)
                                                           : p.reports.erase(item);
      if (!erased) throw missing();
    });
    return send(res, {{"revision", revision}});
  }

  // PUT
  const Json body = body_json(req);
  std::function<void(Project&)> apply;
  if (category == "cases") {
    GoalStructure structure = structure_input(body).first;
    require_valid(structure, "case");
    apply = [structure, item](Project& p) { p.cases[item] = structure; };
  } else if (category == "patterns") {
    PatternDocument pattern = pattern_input(body, "structure", "text");
    require_valid(pattern.structure(), "pattern");
    apply = [pattern, item](Project& p) { p.patterns[item] = pattern; };
  } else if (category == "knowledge") {
    DomainKnowledge knowledge = knowledge_from_json(body);
    knowledge.check(true);
    apply = [knowledge, item](Project& p) { p.knowledge[item] = knowledge; };
  } else {
    EvaluationReport report = evaluation_report_from_json(body);
    apply = [report, item](Project& p) { p.reports[item] = report; };
  }
  send(res, {{"revision", mutate(project, apply)}});
}

void Service::Impl::routes() {
  server.set_payload_max_length(16u << 20);

  server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (config.token.empty() || req.method == "OPTIONS" || req.path == "/api/health") {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    const std::string expected = "Bearer " + config.token;
    const std::string given = req.get_header_value("Authorization");
    if (given.size() == expected.size() &&
        CRYPTO_memcmp(given.data(), expected.data(), given.size()) == 0) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    send_error(res, "Unauthorized", "missing or wrong bearer token");
    return httplib::Server::HandlerResponse::Handled;
  });

  server.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
    if (!config.cors_origin.empty()) {
      res.set_header("Access-Control-Allow-Origin", config.cors_origin);
      res.set_header("Vary", "Origin");
    }
  });

  server.Options(R"(/api/.*)", [this](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    if (!config.cors_origin.empty()) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
      res.set_header("Access-Control-Max-Age", "600");
    }
  });

  server.set_exception_handler([](const httplib::Request& req, httplib::Response& res,
                                  std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const ApiError& e) {
      send_error(res, e.code, e.what(), e.details);
    } catch (const Error& e) {
      Json details = Json::object();
      if (!e.field().empty()) details["field"] = e.field();
      send_error(res, error_code_name(e.code()), e.what(), details);
    } catch (const Json::exception& e) {
      send_error(res, "InvalidArgument", e.what());
    } catch (const std::exception& e) {
      spdlog::error("{} {}: {}", req.method, req.path, e.what());
      send_error(res, "Internal", "internal error");
    } catch (...) {
      send_error(res, "Internal", "internal error");
    }
  });

  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) {
      send_error(res, "NotFound", fmt::format("no endpoint {} {}", req.method, req.path));
    } else if (res.status == 405) {
      send_error(res, "MethodNotAllowed", fmt::format("{} not allowed on {}", req.method, req.path));
    } else if (res.status == 413) {
      const int status = res.status;
      send_error(res, "InvalidArgument", "request body too large");
      res.status = status;
    }
  });

  server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
    send(res, {{"status", "ok"}, {"service", "gsnkit"}});
  });

  server.Post("/api/parse", [](const httplib::Request& req, httplib::Response& res) {
    const Json body = body_json(req);
    const ParseResult parsed = parse(require_string(body, "text"));
    Json out = {{"kind", to_string(parsed.kind)},
                {"structure", to_json(parsed.structure, parsed.kind)},
                {"diagnostics", diagnostics_json(parsed.diagnostics)},
                {"ok", parsed.ok()}};
    if (parsed.ok() && parsed.kind == DocumentKind::kPattern) {
      out["structure"] = to_json(parsed.pattern());
    }
    send(res, out);
  });

  server.Post("/api/serialize", [](const httplib::Request& req, httplib::Response& res) {
    const Json body = body_json(req);
    auto [structure, kind] = structure_input(body);
    require_valid(structure, "structure");
    if (kind == DocumentKind::kPattern) {
      send(res, {{"text", serialize(PatternDocument(structure)).str()}});
    } else {
      send(res, {{"text", serialize(structure, kind).str()}});
    }
  });

  server.Post("/api/validate", [](const httplib::Request& req, httplib::Response& res) {
    const Json body = body_json(req);
    const auto structure = structure_input(body).first;
    const auto violations = validate(structure);
    send(res, {{"valid", !has_errors(violations)},
               {"violations", violations_json(violations)},
               {"stats", to_json(statistics(structure))}});
  });

  server.Post("/api/export", [](const httplib::Request& req, httplib::Response& res) {
    const Json body = body_json(req);
    auto [structure, kind] = structure_input(body);
    const std::string format = req.has_param("format") ? req.get_param_value("format")
                                                       : optional_string(body, "format").value_or("svg");
    if (format == "json") {
      const Json out = kind == DocumentKind::kPattern ? to_json(PatternDocument(structure))
                                                      : to_json(structure, kind);
      res.set_content(out.dump(2), kJsonType);
      return;
    }
    require_valid(structure, "structure");
    if (format == "dot") {
      res.set_content(export_dot(structure), "text/vnd.graphviz; charset=utf-8");
    } else if (format == "svg") {
      res.set_content(export_svg(structure), "image/svg+xml");
    } else {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown export format '{}'", format), "format");
    }
  });

  server.Post("/api/detect", [this](const httplib::Request& req, httplib::Response& res) {
    handle_detect(req, res);
  });
  server.Post("/api/instantiate", [this](const httplib::Request& req, httplib::Response& res) {
    handle_instantiate(req, res);
  });
  server.Post("/api/evaluate", [this](const httplib::Request& req, httplib::Response& res) {
    handle_evaluate(req, res);
  });

  server.Get("/api/jobs/:id", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.path_params.at("id");
    std::lock_guard lock(jobs_mutex);
    auto it = jobs.find(id);
    if (it == jobs.end()) throw Error(ErrorCode::kNotFound, fmt::format("no job '{}'", id));
    Json out = {{"job", id}, {"status", it->second.status}};
    if (it->second.report) {
      out["report"] = to_json(*it->second.report);
      out["table"] = it->second.report->to_table();
    }
    if (!it->second.error.empty()) out["error"] = it->second.error;
    send(res, out);
  });

  server.Get("/api/projects", [this](const httplib::Request&, httplib::Response& res) {
    send(res, {{"projects", store.list()}});
  });

  server.Post("/api/projects", [this](const httplib::Request& req, httplib::Response& res) {
    const Json body = body_json(req);
    Project project;
    project.name = require_string(body, "name");
    std::lock_guard lock(project_lock(project.name));
    if (store.exists(project.name)) {
      throw Error(ErrorCode::kConflict, fmt::format("project '{}' already exists", project.name), "name");
    }
    project.created = project.modified = now_ms();
    const std::string revision = store.save(project);
    send(res, {{"name", project.name}, {"revision", revision}}, 201);
  });

  server.Get("/api/projects/:project", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string name = req.path_params.at("project");
    std::optional<std::string> revision;
    if (req.has_param("revision")) revision = req.get_param_value("revision");
    const Project project = store.load(name, revision);
    send(res, project_json(project, revision.value_or(store.head(name).value_or(""))));
  });

  server.Get("/api/projects/:project/revisions",
             [this](const httplib::Request& req, httplib::Response& res) {
               const std::string name = req.path_params.at("project");
               Json revisions = Json::array();
               for (const auto& r : store.history(name)) {
                 revisions.push_back({{"id", r.id}, {"modified", r.modified}});
               }
               send(res, {{"head", store.head(name).value_or("")}, {"revisions", revisions}});
             });

  server.Post("/api/projects/:project/prune", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string name = req.path_params.at("project");
    const Json body = body_json(req);
    auto it = body.find("keep");
    std::size_t keep = 0;
    if (it != body.end() && !it->is_null()) {
      if (!it->is_number_integer() || it->get<long long>() < 0) {
        throw Error(ErrorCode::kInvalidArgument, "'keep' must be an integer >= 0", "keep");
      }
      keep = it->get<std::size_t>();
    }
    std::lock_guard lock(project_lock(name));
    send(res, {{"removed", store.prune(name, keep)}});
  });

  const auto item = [this](const httplib::Request& req, httplib::Response& res) { handle_item(req, res); };
  server.Get("/api/projects/:project/:category/:item", item);
  server.Put("/api/projects/:project/:category/:item", item);
  server.Delete("/api/projects/:project/:category/:item", item);
}

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  impl_->routes();
}

Service::~Service() = default;

int Service::bind() {
  if (impl_->config.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(impl_->config.host);
  } else if (impl_->server.bind_to_port(impl_->config.host, impl_->config.port)) {
    impl_->port = impl_->config.port;
  } else {
    impl_->port = -1;
  }
  if (impl_->port <= 0) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("cannot bind {}:{}", impl_->config.host, impl_->config.port));
  }
  return impl_->port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

const ServiceConfig& Service::config() const { return impl_->config; }

}  // namespace gsnkit
