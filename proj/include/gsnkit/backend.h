#pragma once

/// @file backend.h
/// Pluggable text-generation backends. The production backend speaks the
/// de-facto chat-completion JSON protocol over HTTP(S); tests and offline
/// runs use ScriptedBackend.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace gsnkit {

struct PromptPair {
  std::string system;
  std::string user;

  friend bool operator==(const PromptPair&, const PromptPair&) = default;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;

  virtual std::string name() const = 0;

  /// Returns the reply text. Throws Error(kBackendUnavailable) on transport
  /// failure and Error(kBackendRefusal) when the model declines to answer.
  virtual std::string complete(const PromptPair& prompt) = 0;
};

struct GenerationBackendConfig {
  std::string name = "default";
  /// Full URL of the chat-completion endpoint, e.g.
  /// https://api.openai.com/v1/chat/completions
  std::string endpoint;
  std::string model;
  double temperature = 1.0;
  int max_output_tokens = 4096;
  /// Environment variable holding the bearer credential; never the value.
  std::string credential_env = "OPENAI_API_KEY";
  int timeout_seconds = 120;
  std::size_t max_in_flight = 4;
  bool debug = false;

  /// Throws Error(kInvalidArgument) when an invariant is broken.
  void check() const;
};

/// Backends named in a JSON configuration file:
/// {"backends": [{"name": ..., "endpoint": ..., "model": ..., ...}]}
std::vector<GenerationBackendConfig> load_backend_configs(const std::filesystem::path& path);

class ChatCompletionBackend : public GenerationBackend {
 public:
  explicit ChatCompletionBackend(GenerationBackendConfig config);
  ~ChatCompletionBackend() override;

  std::string name() const override { return config_.name; }
  std::string complete(const PromptPair& prompt) override;

  const GenerationBackendConfig& config() const { return config_; }

  /// Request body sent for a prompt; exposed for tests.
  std::string request_body(const PromptPair& prompt) const;

 private:
  struct Impl;
  GenerationBackendConfig config_;
  std::unique_ptr<Impl> impl_;
};

/// Replays canned replies in order, cycling when exhausted, or delegates to
/// a callback. Records every prompt it receives.
class ScriptedBackend : public GenerationBackend {
 public:
  using Responder = std::function<std::string(const PromptPair&)>;

  ScriptedBackend(std::string name, std::vector<std::string> replies);
  ScriptedBackend(std::string name, Responder responder);

  std::string name() const override { return name_; }
  std::string complete(const PromptPair& prompt) override;

  std::vector<PromptPair> prompts() const;

 private:
  std::string name_;
  std::vector<std::string> replies_;
  Responder responder_;
  mutable std::mutex mutex_;
  std::size_t next_ = 0;
  std::vector<PromptPair> prompts_;
};

/// Resolves backend names for the CLI and the service:
///   "mock:<file>"  scripted backend replaying the file's contents
///   any other name looked up in the configuration list.
/// Throws Error(kNotFound) for unknown names.
std::shared_ptr<GenerationBackend> resolve_backend(
    const std::string& name, const std::vector<GenerationBackendConfig>& configs);

}  // namespace gsnkit
