#include "archgrad/gradcheck.hpp"

#include <cmath>
#include <limits>

#include "archgrad/status.hpp"

namespace ag {

double gradcheck(const GradcheckTarget& target,
                 const std::vector<double>& point, double step) {
  if (!(step > 0.0)) {
    throw Error(Status::InvalidArgument, "gradcheck: step must be positive");
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<double> autodiff;
  try {
    autodiff = target.gradient(point);
  } catch (const Error&) {
    return kInf;
  }
  if (autodiff.size() != point.size()) return kInf;

  double worst = 0.0;
  std::vector<double> x = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    double fp, fm;
    try {
      x[i] = point[i] + step;
      fp = target.value(x);
      x[i] = point[i] - step;
      fm = target.value(x);
    } catch (const Error&) {
      return kInf;
    }
    x[i] = point[i];
    const double central = (fp - fm) / (2.0 * step);
    if (!std::isfinite(central) || !std::isfinite(autodiff[i])) return kInf;
    const double err =
        std::fabs(autodiff[i] - central) / std::max(1.0, std::fabs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace ag
