#pragma once

#include <stdexcept>
#include <string>

namespace ndgi {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kMalformedHeader,
  kDimensionMismatch,
  kNonFinitePixel,
  kEmptyMask,
  kOutOfRange,
  kNotDivisible,
  kWidthMismatch,
  kNonFiniteLoss,
  kCorruptPayload,
  kVersionMismatch,
  kSizeMismatch,
  kUnknownTile,
  kNotResident,
  kMissingTileModel,
};

const char* to_string(ErrorCode code);

// All library failures are reported through this exception; `code()` lets
// callers and tests distinguish the failure class without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ndgi
