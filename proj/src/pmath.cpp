#include "archgrad/pmath.hpp"

#include <cmath>
#include <limits>

namespace ag {

namespace {

// fdlibm-style hi/lo split of ln(2).
constexpr double kLn2Hi = 6.93147180369123816490e-01;
constexpr double kLn2Lo = 1.90821492927058770002e-10;
constexpr double kInvLn2 = 1.44269504088896338700e+00;

// exp(r) for |r| <= 0.3466 by Taylor series, summed smallest-term first.
double exp_reduced(double r) {
  double term = 1.0;
  double acc[15];
  int n = 0;
  for (; n < 15; ++n) {
    acc[n] = term;
    term = term * r / static_cast<double>(n + 1);
  }
  double s = 0.0;
  for (int i = 14; i >= 0; --i) s += acc[i];
  return s;
}

}  // namespace

double pexp(double x) {
  if (std::isnan(x)) return x;
  if (x > 709.782712893384) return std::numeric_limits<double>::infinity();
  if (x < -745.2) return 0.0;
  // x = k*ln2 + r with |r| <= ln2/2.
  double kd = x * kInvLn2;
  // round to nearest, away from zero on ties; exact for |kd| < 2^52
  double k = (kd >= 0.0) ? std::floor(kd + 0.5) : std::ceil(kd - 0.5);
  double r = (x - k * kLn2Hi) - k * kLn2Lo;
  return std::scalbn(exp_reduced(r), static_cast<int>(k));
}

double plog(double x) {
  if (std::isnan(x)) return x;
  if (x < 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (std::isinf(x)) return x;
  int e = 0;
  double m = std::frexp(x, &e);  // m in [0.5, 1)
  if (m < 0.70710678118654752440) {
    m *= 2.0;
    e -= 1;
  }
  // m in [sqrt(1/2), sqrt(2)); log(m) = 2*atanh(s), s = (m-1)/(m+1), |s| <= 0.1716
  double s = (m - 1.0) / (m + 1.0);
  double s2 = s * s;
  // odd series up to s^25, summed smallest-term first
  double acc = 0.0;
  double p = s;
  double terms[13];
  for (int i = 0; i < 13; ++i) {
    terms[i] = p / static_cast<double>(2 * i + 1);
    p *= s2;
  }
  for (int i = 12; i >= 0; --i) acc += terms[i];
  double logm = 2.0 * acc;
  double ed = static_cast<double>(e);
  return ed * kLn2Hi + (logm + ed * kLn2Lo);
}

double pexpm1(double x) {
  if (std::isnan(x)) return x;
  if (x > 0.7 || x < -0.7) return pexp(x) - 1.0;
  // Taylor: x + x^2/2! + ... ; |x| <= 0.7 converges by n = 18
  double term = x;
  double terms[19];
  int n = 0;
  for (; n < 19; ++n) {
    terms[n] = term;
    term = term * x / static_cast<double>(n + 2);
  }
  double s = 0.0;
  for (int i = 18; i >= 0; --i) s += terms[i];
  return s;
}

double ptanh(double x) {
  if (std::isnan(x)) return x;
  double ax = std::fabs(x);
  if (ax >= 20.0) return (x > 0.0) ? 1.0 : -1.0;
  // tanh(|x|) = -u/(u+2), u = expm1(-2|x|); no cancellation for any |x|
  double u = pexpm1(-2.0 * ax);
  double t = -u / (u + 2.0);
  return (x >= 0.0) ? t : -t;
}

}  // namespace ag
