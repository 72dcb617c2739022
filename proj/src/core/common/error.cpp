#include "common/error.hpp"

namespace netshaper {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Io: return "io";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Config: return "config";
    case ErrorKind::Scheduling: return "scheduling";
    case ErrorKind::Session: return "session";
    case ErrorKind::Auth: return "auth";
    case ErrorKind::ParameterMismatch: return "parameter-mismatch";
    case ErrorKind::Capacity: return "capacity";
  }
  return "unknown";
}

}  // namespace netshaper
