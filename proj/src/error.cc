#include "gsnkit/error.h"

namespace gsnkit {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidStructure: return "InvalidStructure";
    case ErrorCode::kMalformedPlaceholder: return "MalformedPlaceholder";
    case ErrorCode::kEmptyText: return "EmptyText";
    case ErrorCode::kInvalidRule: return "InvalidRule";
    case ErrorCode::kThresholdOutOfRange: return "ThresholdOutOfRange";
    case ErrorCode::kEmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::kMissingInput: return "MissingInput";
    case ErrorCode::kBackendUnavailable: return "BackendUnavailable";
    case ErrorCode::kBackendRefusal: return "BackendRefusal";
    case ErrorCode::kReplyUnparseable: return "ReplyUnparseable";
    case ErrorCode::kStoreUnwritable: return "StoreUnwritable";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kCorruptStore: return "CorruptStore";
    case ErrorCode::kConflict: return "Conflict";
  }
  return "Unknown";
}

}  // namespace gsnkit
