#include "gsnkit/backend.h"

#include <cstdlib>
#include <fstream>
#include <semaphore>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "httplib.h"
#include "json.hpp"

#include "gsnkit/error.h"

namespace gsnkit {

using nlohmann::json;

void GenerationBackendConfig::check() const {
  if (name.empty()) throw Error(ErrorCode::kInvalidArgument, "backend name must not be empty");
  if (!(temperature >= 0)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("backend '{}': temperature must be >= 0", name));
  }
  if (max_output_tokens < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("backend '{}': max output tokens must be >= 1", name));
  }
  if (max_in_flight < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("backend '{}': in-flight limit must be >= 1", name));
  }
}

std::vector<GenerationBackendConfig> load_backend_configs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, fmt::format("cannot read {}", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: {}", path.string(), e.what()));
  }
  std::vector<GenerationBackendConfig> out;
  try {
    for (const json& b : doc.at("backends")) {
      GenerationBackendConfig c;
      c.name = b.at("name").get<std::string>();
      c.endpoint = b.at("endpoint").get<std::string>();
      c.model = b.at("model").get<std::string>();
      c.temperature = b.value("temperature", c.temperature);
      c.max_output_tokens = b.value("max_output_tokens", c.max_output_tokens);
      c.credential_env = b.value("credential_env", c.credential_env);
      c.timeout_seconds = b.value("timeout_seconds", c.timeout_seconds);
      c.max_in_flight = b.value("max_in_flight", c.max_in_flight);
      c.debug = b.value("debug", c.debug);
      c.check();
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: {}", path.string(), e.what()));
  }
  return out;
}

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("endpoint '{}' is not a URL", url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool transient_status(int status) { return status == 429 || status >= 500; }

}  // namespace

struct ChatCompletionBackend::Impl {
  explicit Impl(std::size_t limit) : in_flight(static_cast<std::ptrdiff_t>(limit)) {}
  std::counting_semaphore<1024> in_flight;
};

ChatCompletionBackend::ChatCompletionBackend(GenerationBackendConfig config)
    : config_(std::move(config)) {
  config_.check();
  split_url(config_.endpoint);
  impl_ = std::make_unique<Impl>(std::min<std::size_t>(config_.max_in_flight, 1024));
}

ChatCompletionBackend::~ChatCompletionBackend() = default;

std::string ChatCompletionBackend::request_body(const PromptPair& prompt) const {
  json body = {
      {"model", config_.model},
      {"messages",
       json::array({{{"role", "system"}, {"content", prompt.system}},
                    {{"role", "user"}, {"content", prompt.user}}})},
      {"temperature", config_.temperature},
      {"max_tokens", config_.max_output_tokens},
  };
  return body.dump();
}

std::string ChatCompletionBackend::complete(const PromptPair& prompt) {
  const Endpoint endpoint = split_url(config_.endpoint);
  const std::string body = request_body(prompt);

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.credential_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  if (config_.debug) {
    spdlog::debug("[{}] POST {} (Authorization redacted) {}", config_.name, config_.endpoint, body);
  }

  impl_->in_flight.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{impl_->in_flight};

  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);
    auto res = client.Post(endpoint.path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      spdlog::warn("[{}] transport failure (attempt {}): {}", config_.name, attempt + 1, last_error);
      continue;
    }
    if (config_.debug) spdlog::debug("[{}] {} {}", config_.name, res->status, res->body);
    if (transient_status(res->status)) {
      last_error = fmt::format("HTTP {}", res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::kBackendUnavailable,
                  fmt::format("backend '{}' answered HTTP {}: {}", config_.name, res->status,
                              res->body.substr(0, 200)));
    }
    json reply;
    try {
      reply = json::parse(res->body);
      const json& choice = reply.at("choices").at(0);
      const json& message = choice.at("message");
      if (message.contains("refusal") && message["refusal"].is_string()) {
        throw Error(ErrorCode::kBackendRefusal, message["refusal"].get<std::string>());
      }
      if (choice.value("finish_reason", std::string()) == "content_filter") {
        throw Error(ErrorCode::kBackendRefusal,
                    fmt::format("backend '{}' filtered the reply", config_.name));
      }
      if (!message.contains("content") || !message["content"].is_string()) {
        throw Error(ErrorCode::kBackendRefusal,
                    fmt::format("backend '{}' returned no content", config_.name));
      }
      return message["content"].get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kBackendUnavailable,
                  fmt::format("backend '{}' sent a malformed reply: {}", config_.name, e.what()));
    }
  }
  throw Error(ErrorCode::kBackendUnavailable,
              fmt::format("backend '{}' unreachable at {}: {}", config_.name, config_.endpoint,
                          last_error));
}

ScriptedBackend::ScriptedBackend(std::string name, std::vector<std::string> replies)
    : name_(std::move(name)), replies_(std::move(replies)) {
  if (replies_.empty()) throw Error(ErrorCode::kInvalidArgument, "scripted backend needs replies");
}

ScriptedBackend::ScriptedBackend(std::string name, Responder responder)
    : name_(std::move(name)), responder_(std::move(responder)) {}

std::string ScriptedBackend::complete(const PromptPair& prompt) {
  std::unique_lock lock(mutex_);
  prompts_.push_back(prompt);
  if (responder_) {
    lock.unlock();
    return responder_(prompt);
  }
  std::string reply = replies_[next_ % replies_.size()];
  ++next_;
  return reply;
}

std::vector<PromptPair> ScriptedBackend::prompts() const {
  std::lock_guard lock(mutex_);
  return prompts_;
}

std::shared_ptr<GenerationBackend> resolve_backend(
    const std::string& name, const std::vector<GenerationBackendConfig>& configs) {
  if (name.rfind("mock:", 0) == 0) {
    const std::string file = name.substr(5);
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::kNotFound, fmt::format("cannot read mock reply {}", file));
    std::stringstream buffer;
    buffer << in.rdbuf();
    return std::make_shared<ScriptedBackend>(name, std::vector<std::string>{buffer.str()});
  }
  for (const auto& config : configs) {
    if (config.name == name) return std::make_shared<ChatCompletionBackend>(config);
  }
  throw Error(ErrorCode::kNotFound, fmt::format("no backend named '{}' is configured", name));
}

}  // namespace gsnkit
