#include "barkid/error.hpp"

namespace barkid {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParameter: return "parameter_error";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kFormat: return "format_error";
    case ErrorCode::kValidation: return "validation_error";
    case ErrorCode::kEstimation: return "estimation_error";
    case ErrorCode::kProjection: return "projection_error";
    case ErrorCode::kTraining: return "training_error";
    case ErrorCode::kExtraction: return "extraction_error";
    case ErrorCode::kBuild: return "build_error";
    case ErrorCode::kLoad: return "load_error";
    case ErrorCode::kConfig: return "config_error";
  }
  return "unknown_error";
}

}  // namespace barkid
