#include "funcanon/error.hpp"

namespace funcanon {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kFrameMismatch: return "frame-mismatch";
    case ErrorCode::kUnknownQuery: return "unknown-query";
    case ErrorCode::kBackendUnavailable: return "backend-unavailable";
    case ErrorCode::kProtocolError: return "protocol-error";
    case ErrorCode::kEmptyFunctionalSet: return "empty-functional-set";
    case ErrorCode::kDegenerateDirection: return "degenerate-direction";
    case ErrorCode::kNoAnchor: return "no-anchor";
    case ErrorCode::kIncompatibleFunction: return "incompatible-function";
    case ErrorCode::kMissingFunctionalVector: return "missing-functional-vector";
    case ErrorCode::kCannotDecompose: return "cannot-decompose";
    case ErrorCode::kVocabularyError: return "vocabulary-error";
    case ErrorCode::kTrainingDiverged: return "training-diverged";
    case ErrorCode::kFrameMissing: return "frame-missing";
    case ErrorCode::kIoError: return "io-error";
    case ErrorCode::kParseError: return "parse-error";
    case ErrorCode::kNoTargets: return "no targets";
  }
  return "unknown";
}

}  // namespace funcanon
