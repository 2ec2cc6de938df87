#pragma once

#include <string>
#include <vector>

#include "archgrad/bilevel.hpp"

namespace ag {

enum class EstimatorType {
  FirstOrder,
  SecondOrderDarts,
  Amended,
  ExactImplicit,
  BruteForce,
};

/// Tagged estimator choice: first-order discards the implicit term entirely,
/// second-order DARTS replaces the inverse inner Hessian with a scaled
/// identity, and the amended estimator replaces it with eta times the
/// Hessian itself. Exact and brute-force are the oracle routes.
struct EstimatorKind {
  EstimatorType type = EstimatorType::FirstOrder;
  double eta = 0.1;    // amending coefficient (Amended)
  double xi = 1.0;     // identity-approximation scale (SecondOrderDarts)
  double delta = 1e-3; // outer finite-difference step (BruteForce)

  static EstimatorKind first_order() { return {EstimatorType::FirstOrder}; }
  static EstimatorKind second_order(double xi) {
    return {EstimatorType::SecondOrderDarts, 0.1, xi};
  }
  static EstimatorKind amended(double eta) {
    return {EstimatorType::Amended, eta};
  }
  static EstimatorKind exact_implicit() {
    return {EstimatorType::ExactImplicit};
  }
  static EstimatorKind brute_force(double delta) {
    return {EstimatorType::BruteForce, 0.1, 1.0, delta};
  }

  std::string name() const;
  static EstimatorType type_from_name(const std::string& name);
  void validate() const;
};

struct BilevelState {
  const BilevelObjective* objective = nullptr;
  std::vector<double> omega;
  std::vector<double> alpha;
};

/// Direct term: gradient of the validation loss in alpha at the current
/// point, exact via reverse mode.
std::vector<double> g1(const BilevelState& state);

/// Finite-difference scale 0.01 / ||val omega-gradient||_2. Throws
/// DegenerateDirection on a zero gradient.
double epsilon_scale(const std::vector<double>& val_omega_grad);

/// Two-step finite-difference estimate of -eta * J * H * v (J the mixed
/// train-loss partial, H the inner-Hessian, v the val omega-gradient):
///   w1/w2 = w +- eps*v,     Hv ~ [gw(w1) - gw(w2)] / (2 eps)
///   w3/w4 = w +- [gw(w1) - gw(w2)] / 2
///   result = -eta * [ga(w3) - ga(w4)] / (2 eps)
/// Both layers reuse the same eps; the 1/2 makes the second perturbation
/// eps*(Hv). A degenerate direction yields a zero vector plus a warning.
std::vector<double> amended_g2(const BilevelState& state, double eta);

/// Single finite difference with H^{-1} replaced by the identity scaled by
/// xi: -xi * [ga(w + eps*v) - ga(w - eps*v)] / (2 eps).
std::vector<double> second_order_darts_g2(const BilevelState& state,
                                          double xi);

/// Dispatcher: g1 plus the estimated implicit term per kind. Amended with
/// eta == 0 returns g1 through the same code path as FirstOrder, hence
/// bit-identical results. Exact and brute-force delegate to the oracle.
std::vector<double> estimate_arch_gradient(const EstimatorKind& kind,
                                           const BilevelState& state);

}  // namespace ag
