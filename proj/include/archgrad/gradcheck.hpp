#pragma once

#include <functional>
#include <vector>

namespace ag {

/// A scalar function of a flat parameter vector, with its reverse-mode
/// gradient. The value path is what central differences probe; the gradient
/// path is what gets validated.
struct GradcheckTarget {
  std::function<double(const std::vector<double>&)> value;
  std::function<std::vector<double>(const std::vector<double>&)> gradient;
};

/// Max over coordinates of |autodiff - centraldiff| / max(1, |centraldiff|).
/// Non-finite intermediates are reported as +Inf rather than thrown.
double gradcheck(const GradcheckTarget& target,
                 const std::vector<double>& point, double step);

}  // namespace ag
