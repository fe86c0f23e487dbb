#include "atelier/error.hpp"

namespace atelier {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::syntax: return "syntax";
    case ErrorCode::unknown_enum: return "unknown_enum";
    case ErrorCode::malformed_rational: return "malformed_rational";
    case ErrorCode::version_mismatch: return "version_mismatch";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::out_of_vocabulary: return "out_of_vocabulary";
    case ErrorCode::invalid_score: return "invalid_score";
    case ErrorCode::invalid_config: return "invalid_config";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::too_large: return "too_large";
    case ErrorCode::invalid_transition: return "invalid_transition";
    case ErrorCode::storage: return "storage";
    case ErrorCode::not_found: return "not_found";
  }
  return "unknown";
}

}  // namespace atelier
