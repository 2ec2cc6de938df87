#pragma once

#include <stdexcept>
#include <string>

namespace ag {

enum class Status {
  Ok = 0,
  InvalidArgument,
  ShapeMismatch,
  NonScalarOutput,
  DegenerateDirection,
  NonConvergence,
  SingularHessian,
  Diverged,
  NonFinite,
  CapExceeded,
  Config,
  Io,
  Internal,
};

const char* status_name(Status s);

/// Exception carrying a Status code; every library error path throws this.
class Error : public std::runtime_error {
 public:
  Error(Status status, const std::string& message)
      : std::runtime_error(message), status_(status) {}

  Status status() const { return status_; }

 private:
  Status status_;
};

// Warnings go to stderr; kept free of any global state.
void log_warning(const std::string& message);

}  // namespace ag
