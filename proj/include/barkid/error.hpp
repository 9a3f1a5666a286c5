#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace barkid {

enum class ErrorCode : int {
  kParameter = 10,
  kIo = 11,
  kFormat = 12,
  kValidation = 13,
  kEstimation = 14,
  kProjection = 15,
  kTraining = 16,
  kExtraction = 17,
  kBuild = 18,
  kLoad = 19,
  kConfig = 20,
};

std::string_view error_name(ErrorCode code);

// All library failures surface as barkid::Error; the CLI maps code() to its
// exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace barkid
