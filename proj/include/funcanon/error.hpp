#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace funcanon {

enum class ErrorCode {
  kInvalidArgument,
  kFrameMismatch,
  kUnknownQuery,
  kBackendUnavailable,
  kProtocolError,
  kEmptyFunctionalSet,
  kDegenerateDirection,
  kNoAnchor,
  kIncompatibleFunction,
  kMissingFunctionalVector,
  kCannotDecompose,
  kVocabularyError,
  kTrainingDiverged,
  kFrameMissing,
  kIoError,
  kParseError,
  kNoTargets,
};

std::string_view error_code_name(ErrorCode code);

// Library-wide exception. The code is the contract; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace funcanon
