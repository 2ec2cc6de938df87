#include "archgrad/estimators.hpp"

#include <cmath>

#include "archgrad/oracle.hpp"
#include "archgrad/status.hpp"

namespace ag {

std::string EstimatorKind::name() const {
  switch (type) {
    case EstimatorType::FirstOrder: return "first-order";
    case EstimatorType::SecondOrderDarts: return "second-order";
    case EstimatorType::Amended: return "amended";
    case EstimatorType::ExactImplicit: return "exact";
    case EstimatorType::BruteForce: return "brute-force";
  }
  return "unknown";
}

EstimatorType EstimatorKind::type_from_name(const std::string& name) {
  if (name == "first-order") return EstimatorType::FirstOrder;
  if (name == "second-order") return EstimatorType::SecondOrderDarts;
  if (name == "amended") return EstimatorType::Amended;
  if (name == "exact") return EstimatorType::ExactImplicit;
  if (name == "brute-force") return EstimatorType::BruteForce;
  throw Error(Status::Config, "unknown estimator: " + name);
}

void EstimatorKind::validate() const {
  if (type == EstimatorType::Amended && eta < 0.0) {
    throw Error(Status::InvalidArgument, "amending coefficient must be >= 0");
  }
  if (type == EstimatorType::SecondOrderDarts && !(xi > 0.0)) {
    throw Error(Status::InvalidArgument, "xi must be positive");
  }
  if (type == EstimatorType::BruteForce && !(delta > 0.0)) {
    throw Error(Status::InvalidArgument, "delta must be positive");
  }
}

namespace {

void check_state(const BilevelState& state) {
  if (!state.objective) {
    throw Error(Status::InvalidArgument, "estimator state has no objective");
  }
  if (state.omega.size() != state.objective->dim_omega() ||
      state.alpha.size() != state.objective->dim_alpha()) {
    throw Error(Status::ShapeMismatch,
                "state vectors do not match objective dimensions");
  }
}

std::vector<double> axpy(const std::vector<double>& x, double a,
                         const std::vector<double>& y) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + a * y[i];
  return out;
}

double l2_norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

std::vector<double> g1(const BilevelState& state) {
  check_state(state);
  auto eval = state.objective->val_eval(state.omega, state.alpha,
                                        {/*omega=*/false, /*alpha=*/true});
  if (!std::isfinite(eval.loss)) {
    throw Error(Status::NonFinite, "validation loss is not finite");
  }
  return eval.grad_alpha;
}

double epsilon_scale(const std::vector<double>& val_omega_grad) {
  const double norm = l2_norm(val_omega_grad);
  if (norm == 0.0) {
    throw Error(Status::DegenerateDirection,
                "validation omega-gradient has zero norm");
  }
  if (!std::isfinite(norm)) {
    throw Error(Status::NonFinite, "validation omega-gradient is not finite");
  }
  return 0.01 / norm;
}

std::vector<double> amended_g2(const BilevelState& state, double eta) {
  check_state(state);
  if (eta < 0.0) {
    throw Error(Status::InvalidArgument, "amending coefficient must be >= 0");
  }
  const BilevelObjective& obj = *state.objective;
  const auto v = obj.val_eval(state.omega, state.alpha,
                              {/*omega=*/true, /*alpha=*/false})
                     .grad_omega;
  double eps;
  try {
    eps = epsilon_scale(v);
  } catch (const Error& e) {
    if (e.status() == Status::DegenerateDirection) {
      log_warning("amended term skipped: " + std::string(e.what()));
      return std::vector<double>(obj.dim_alpha(), 0.0);
    }
    throw;
  }

  const auto w1 = axpy(state.omega, eps, v);
  const auto w2 = axpy(state.omega, -eps, v);
  const auto gw1 = obj.train_eval(w1, state.alpha, {true, false}).grad_omega;
  const auto gw2 = obj.train_eval(w2, state.alpha, {true, false}).grad_omega;

  // raw gradient difference; halving it makes the next perturbation eps*(Hv)
  std::vector<double> d(gw1.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = gw1[i] - gw2[i];

  const auto w3 = axpy(state.omega, 0.5, d);
  const auto w4 = axpy(state.omega, -0.5, d);
  const auto ga3 = obj.train_eval(w3, state.alpha, {false, true}).grad_alpha;
  const auto ga4 = obj.train_eval(w4, state.alpha, {false, true}).grad_alpha;

  std::vector<double> out(ga3.size());
  const double scale = -eta / (2.0 * eps);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = scale * (ga3[i] - ga4[i]);
  }
  return out;
}

std::vector<double> second_order_darts_g2(const BilevelState& state,
                                          double xi) {
  check_state(state);
  if (!(xi > 0.0)) {
    throw Error(Status::InvalidArgument, "xi must be positive");
  }
  const BilevelObjective& obj = *state.objective;
  const auto v = obj.val_eval(state.omega, state.alpha, {true, false})
                     .grad_omega;
  double eps;
  try {
    eps = epsilon_scale(v);
  } catch (const Error& e) {
    if (e.status() == Status::DegenerateDirection) {
      log_warning("second-order term skipped: " + std::string(e.what()));
      return std::vector<double>(obj.dim_alpha(), 0.0);
    }
    throw;
  }

  const auto w1 = axpy(state.omega, eps, v);
  const auto w2 = axpy(state.omega, -eps, v);
  const auto ga1 = obj.train_eval(w1, state.alpha, {false, true}).grad_alpha;
  const auto ga2 = obj.train_eval(w2, state.alpha, {false, true}).grad_alpha;

  std::vector<double> out(ga1.size());
  const double scale = -xi / (2.0 * eps);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = scale * (ga1[i] - ga2[i]);
  }
  return out;
}

std::vector<double> estimate_arch_gradient(const EstimatorKind& kind,
                                           const BilevelState& state) {
  kind.validate();
  check_state(state);
  switch (kind.type) {
    case EstimatorType::FirstOrder:
      return g1(state);
    case EstimatorType::Amended: {
      if (kind.eta == 0.0) return g1(state);  // degenerates to first-order
      auto total = g1(state);
      const auto correction = amended_g2(state, kind.eta);
      for (std::size_t i = 0; i < total.size(); ++i) {
        total[i] += correction[i];
      }
      return total;
    }
    case EstimatorType::SecondOrderDarts: {
      auto total = g1(state);
      const auto correction = second_order_darts_g2(state, kind.xi);
      for (std::size_t i = 0; i < total.size(); ++i) {
        total[i] += correction[i];
      }
      return total;
    }
    case EstimatorType::ExactImplicit: {
      auto total = g1(state);
      const auto bundle =
          extract_curvature(*state.objective, state.omega, state.alpha);
      const auto g2 = exact_g2(bundle);
      for (std::size_t i = 0; i < total.size(); ++i) total[i] += g2[i];
      return total;
    }
    case EstimatorType::BruteForce:
      // already the full hypergradient (g1 included by the total derivative)
      return brute_force_hypergradient(*state.objective, state.alpha,
                                       state.omega, kind.delta);
  }
  throw Error(Status::Internal, "unhandled estimator kind");
}

}  // namespace ag
