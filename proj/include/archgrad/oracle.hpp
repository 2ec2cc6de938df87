#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "archgrad/bilevel.hpp"

namespace ag {

/// Dense curvature extraction is O(dim^2) gradient evaluations; the cap
/// keeps oracle instances at desk scale.
inline constexpr std::size_t kOracleDimCap = 64;

/// Eigenvalues of the symmetrized Hessian below this floor count as
/// singular: the implicit-function premise no longer holds numerically.
inline constexpr double kEigenvalueFloor = 1e-10;

/// Dense curvature at an inner optimum: H the inner-Hessian (symmetrized),
/// J the mixed partial (alpha rows, omega columns), v the validation
/// omega-gradient.
struct CurvatureBundle {
  std::size_t dim_omega = 0;
  std::size_t dim_alpha = 0;
  std::vector<double> H;  // dim_omega x dim_omega, row-major
  std::vector<double> J;  // dim_alpha x dim_omega, row-major
  std::vector<double> v;  // dim_omega
  double asymmetry = 0.0;  // max |H_ij - H_ji| before symmetrization
};

/// Inner minimization: closed form when the objective provides one, else
/// gradient descent with a backtracking line search. Throws NonConvergence
/// when the gradient-norm tolerance is not met.
std::vector<double> solve_inner(const BilevelObjective& objective,
                                const std::vector<double>& alpha,
                                const std::vector<double>& omega_init,
                                double tol = 1e-10,
                                std::size_t max_iters = 10000);

/// H and J by central differences of the train omega-gradient, v exact.
CurvatureBundle extract_curvature(const BilevelObjective& objective,
                                  const std::vector<double>& omega_star,
                                  const std::vector<double>& alpha,
                                  double fd_step = 1e-4);

/// Exact implicit term -J H^{-1} v by a dense symmetric eigensolve.
/// Throws SingularHessian when the smallest eigenvalue is below the floor.
std::vector<double> exact_g2(const CurvatureBundle& bundle);

struct InnerProductResult {
  double ip = 0.0;
  std::vector<double> g2;       // -J H^{-1} v
  std::vector<double> g2prime;  // -eta J H v
};

/// Both implicit-term routes from one bundle (dense algebra, no finite
/// differences) and their inner product.
InnerProductResult inner_product_check(const CurvatureBundle& bundle,
                                       double eta);

/// Central difference over alpha of a -> L_val(solve_inner(a), a).
/// The inner tolerance is min(1e-10, delta^2 * 1e-2).
std::vector<double> brute_force_hypergradient(
    const BilevelObjective& objective, const std::vector<double>& alpha,
    const std::vector<double>& omega_init, double delta = 1e-3);

// ---- reproducible quadratic instances ----

enum class InstanceVariant {
  General,      // H = U diag(spectrum) U', generic couplings
  IsotropicH,   // H = c I
  CommutingH,   // H and J'J share an eigenbasis
};

struct InstanceOptions {
  std::size_t dim_omega = 8;
  std::size_t dim_alpha = 4;
  double condition_target = 100.0;  // spectrum spread of H
  InstanceVariant variant = InstanceVariant::General;
  std::uint64_t seed = 1;
};

struct QuadraticInstance {
  InstanceOptions options;
  QuadraticBilevelObjective objective;

  /// Bundle from the instance's own matrices (no finite differences).
  CurvatureBundle analytic_bundle(const std::vector<double>& alpha) const;
  /// JSON description (dimensions, matrices, seed) for reproducibility.
  std::string to_json() const;
};

QuadraticInstance make_quadratic_instance(const InstanceOptions& options);

}  // namespace ag
