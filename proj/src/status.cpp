#include "archgrad/status.hpp"

#include <cstdio>

namespace ag {

const char* status_name(Status s) {
  switch (s) {
    case Status::Ok: return "ok";
    case Status::InvalidArgument: return "invalid_argument";
    case Status::ShapeMismatch: return "shape_mismatch";
    case Status::NonScalarOutput: return "non_scalar_output";
    case Status::DegenerateDirection: return "degenerate_direction";
    case Status::NonConvergence: return "non_convergence";
    case Status::SingularHessian: return "singular_hessian";
    case Status::Diverged: return "diverged";
    case Status::NonFinite: return "non_finite";
    case Status::CapExceeded: return "cap_exceeded";
    case Status::Config: return "config";
    case Status::Io: return "io";
    case Status::Internal: return "internal";
  }
  return "unknown";
}

void log_warning(const std::string& message) {
  std::fprintf(stderr, "[archgrad] warning: %s\n", message.c_str());
}

}  // namespace ag
