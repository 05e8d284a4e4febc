#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gsnkit {

/// Failure categories shared by every module. The names double as the
/// machine-readable codes of the HTTP API and the CLI diagnostics.
enum class ErrorCode {
  kInvalidArgument,
  kInvalidStructure,
  kMalformedPlaceholder,
  kEmptyText,
  kInvalidRule,
  kThresholdOutOfRange,
  kEmptyGroundTruth,
  kMissingInput,
  kBackendUnavailable,
  kBackendRefusal,
  kReplyUnparseable,
  kStoreUnwritable,
  kNotFound,
  kCorruptStore,
  kConflict,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  /// `field` names the offending input location, e.g. "elements[2].kind".
  Error(ErrorCode code, const std::string& message, std::string field)
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}

  ErrorCode code() const { return code_; }
  const std::string& field() const { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

}  // namespace gsnkit
