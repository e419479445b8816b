#include "focus/error.hpp"

namespace focus {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::config: return "config";
    case ErrorKind::shape: return "shape";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::io: return "io";
    case ErrorKind::environment: return "environment";
    case ErrorKind::benchmark: return "benchmark";
    case ErrorKind::internal: return "internal";
  }
  return "internal";
}

}  // namespace focus
