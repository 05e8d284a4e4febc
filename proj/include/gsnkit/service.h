#pragma once

/// @file service.h
/// HTTP JSON API over the library. Every failure is answered with
///
///     {"error": {"code": "...", "message": "...", "details": {...}}}
///
/// where code is one of api_error_codes().

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "gsnkit/backend.h"

namespace gsnkit {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path store_root = "gsnkit-store";
  /// Corpus used by corpus-relative detect requests and evaluate jobs.
  std::filesystem::path corpus_dir;
  /// Static bearer token; empty disables authentication.
  std::string token;
  /// Value of Access-Control-Allow-Origin; empty disables CORS headers.
  std::string cors_origin;
  std::vector<GenerationBackendConfig> backends;
};

/// The published, closed set of error codes.
const std::vector<std::string>& api_error_codes();

/// HTTP status used for an error code.
int api_error_status(std::string_view code);

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and returns the port (useful with port 0). Throws on failure.
  int bind();
  /// Serves until stop(); call bind() first.
  void run();
  void stop();

  const ServiceConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gsnkit
