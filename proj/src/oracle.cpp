#include "archgrad/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "archgrad/jsonio.hpp"
#include "archgrad/rng.hpp"
#include "archgrad/status.hpp"

namespace ag {

namespace {

double l2_norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

Eigen::MatrixXd to_eigen(const std::vector<double>& m, std::size_t rows,
                         std::size_t cols) {
  Eigen::MatrixXd out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = m[i * cols + j];
  }
  return out;
}

std::vector<double> from_eigen_vec(const Eigen::VectorXd& v) {
  std::vector<double> out(static_cast<std::size_t>(v.size()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v(i);
  return out;
}

void check_cap(std::size_t dim_omega, std::size_t dim_alpha) {
  if (dim_omega > kOracleDimCap || dim_alpha > kOracleDimCap) {
    throw Error(Status::CapExceeded,
                "oracle dimensions capped at " +
                    std::to_string(kOracleDimCap) + ", got omega=" +
                    std::to_string(dim_omega) + " alpha=" +
                    std::to_string(dim_alpha));
  }
}

/// Solve H u = x through an eigendecomposition, with the singularity floor.
Eigen::VectorXd solve_spd(const CurvatureBundle& bundle,
                          const Eigen::VectorXd& x,
                          Eigen::MatrixXd* h_out = nullptr) {
  Eigen::MatrixXd H = to_eigen(bundle.H, bundle.dim_omega, bundle.dim_omega);
  if (h_out) *h_out = H;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < kEigenvalueFloor) {
    throw Error(Status::SingularHessian,
                "inner Hessian is singular: smallest eigenvalue " +
                    format_double(min_eig) + " below floor " +
                    format_double(kEigenvalueFloor));
  }
  return es.eigenvectors() *
         (es.eigenvalues().cwiseInverse().asDiagonal() *
          (es.eigenvectors().transpose() * x));
}

}  // namespace

std::vector<double> solve_inner(const BilevelObjective& objective,
                                const std::vector<double>& alpha,
                                const std::vector<double>& omega_init,
                                double tol, std::size_t max_iters) {
  if (!(tol > 0.0)) {
    throw Error(Status::InvalidArgument, "inner tolerance must be positive");
  }
  if (objective.has_closed_form_inner()) {
    return objective.closed_form_inner(alpha);
  }

  std::vector<double> omega = omega_init;
  double residual = 0.0;
  double t_init = 1.0;  // warm-started across iterations
  for (std::size_t it = 0; it < max_iters; ++it) {
    auto eval = objective.train_eval(omega, alpha, {true, false});
    residual = l2_norm(eval.grad_omega);
    if (!std::isfinite(residual)) {
      throw Error(Status::NonFinite, "inner solve hit a non-finite gradient");
    }
    if (residual <= tol) return omega;

    // backtracking line search on the steepest-descent direction
    double t = t_init;
    const double slope = residual * residual;
    bool accepted = false;
    while (t > 1e-20) {
      std::vector<double> trial(omega.size());
      for (std::size_t i = 0; i < omega.size(); ++i) {
        trial[i] = omega[i] - t * eval.grad_omega[i];
      }
      const double trial_loss =
          objective.train_eval(trial, alpha, {false, false}).loss;
      if (trial_loss <= eval.loss - 1e-4 * t * slope) {
        omega = std::move(trial);
        accepted = true;
        t_init = 2.0 * t;
        break;
      }
      t *= 0.5;
    }
    // the loss can no longer resolve a decrease; residual is at the
    // double-precision floor for this instance
    if (!accepted) break;
  }
  throw Error(Status::NonConvergence,
              "inner solve: residual " + format_double(residual) +
                  " above tolerance " + format_double(tol) + " after " +
                  std::to_string(max_iters) + " iterations");
}

CurvatureBundle extract_curvature(const BilevelObjective& objective,
                                  const std::vector<double>& omega_star,
                                  const std::vector<double>& alpha,
                                  double fd_step) {
  if (!(fd_step > 0.0)) {
    throw Error(Status::InvalidArgument, "fd step must be positive");
  }
  const std::size_t n = objective.dim_omega();
  const std::size_t m = objective.dim_alpha();
  check_cap(n, m);

  CurvatureBundle bundle;
  bundle.dim_omega = n;
  bundle.dim_alpha = m;
  bundle.H.assign(n * n, 0.0);
  bundle.J.assign(m * n, 0.0);

  std::vector<double> omega = omega_star;
  for (std::size_t i = 0; i < n; ++i) {
    omega[i] = omega_star[i] + fd_step;
    const auto gp = objective.train_eval(omega, alpha, {true, false})
                        .grad_omega;
    omega[i] = omega_star[i] - fd_step;
    const auto gm = objective.train_eval(omega, alpha, {true, false})
                        .grad_omega;
    omega[i] = omega_star[i];
    for (std::size_t w = 0; w < n; ++w) {
      bundle.H[w * n + i] = (gp[w] - gm[w]) / (2.0 * fd_step);
    }
  }
  // symmetrize, recording how far off the raw estimate was
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = bundle.H[i * n + j];
      const double b = bundle.H[j * n + i];
      bundle.asymmetry = std::max(bundle.asymmetry, std::fabs(a - b));
      const double avg = 0.5 * (a + b);
      bundle.H[i * n + j] = avg;
      bundle.H[j * n + i] = avg;
    }
  }

  std::vector<double> alpha_pt = alpha;
  for (std::size_t a = 0; a < m; ++a) {
    alpha_pt[a] = alpha[a] + fd_step;
    const auto gp = objective.train_eval(omega_star, alpha_pt, {true, false})
                        .grad_omega;
    alpha_pt[a] = alpha[a] - fd_step;
    const auto gm = objective.train_eval(omega_star, alpha_pt, {true, false})
                        .grad_omega;
    alpha_pt[a] = alpha[a];
    for (std::size_t w = 0; w < n; ++w) {
      bundle.J[a * n + w] = (gp[w] - gm[w]) / (2.0 * fd_step);
    }
  }

  bundle.v = objective.val_eval(omega_star, alpha, {true, false}).grad_omega;

  for (double x : bundle.H) {
    if (!std::isfinite(x)) {
      throw Error(Status::NonFinite, "curvature extraction: H not finite");
    }
  }
  for (double x : bundle.J) {
    if (!std::isfinite(x)) {
      throw Error(Status::NonFinite, "curvature extraction: J not finite");
    }
  }
  for (double x : bundle.v) {
    if (!std::isfinite(x)) {
      throw Error(Status::NonFinite, "curvature extraction: v not finite");
    }
  }
  return bundle;
}

std::vector<double> exact_g2(const CurvatureBundle& bundle) {
  Eigen::VectorXd v(bundle.dim_omega);
  for (std::size_t i = 0; i < bundle.dim_omega; ++i) v(i) = bundle.v[i];
  const Eigen::VectorXd u = solve_spd(bundle, v);
  std::vector<double> out(bundle.dim_alpha, 0.0);
  for (std::size_t a = 0; a < bundle.dim_alpha; ++a) {
    double acc = 0.0;
    for (std::size_t w = 0; w < bundle.dim_omega; ++w) {
      acc += bundle.J[a * bundle.dim_omega + w] * u(w);
    }
    out[a] = -acc;
  }
  return out;
}

InnerProductResult inner_product_check(const CurvatureBundle& bundle,
                                       double eta) {
  if (!(eta > 0.0)) {
    throw Error(Status::InvalidArgument,
                "amending coefficient must be positive");
  }
  InnerProductResult res;
  res.g2 = exact_g2(bundle);

  // g2' = -eta J (H v)
  const std::size_t n = bundle.dim_omega;
  std::vector<double> hv(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      acc += bundle.H[i * n + j] * bundle.v[j];
    }
    hv[i] = acc;
  }
  res.g2prime.assign(bundle.dim_alpha, 0.0);
  for (std::size_t a = 0; a < bundle.dim_alpha; ++a) {
    double acc = 0.0;
    for (std::size_t w = 0; w < n; ++w) {
      acc += bundle.J[a * n + w] * hv[w];
    }
    res.g2prime[a] = -eta * acc;
  }

  res.ip = 0.0;
  for (std::size_t a = 0; a < bundle.dim_alpha; ++a) {
    res.ip += res.g2[a] * res.g2prime[a];
  }
  return res;
}

std::vector<double> brute_force_hypergradient(
    const BilevelObjective& objective, const std::vector<double>& alpha,
    const std::vector<double>& omega_init, double delta) {
  if (!(delta > 0.0)) {
    throw Error(Status::InvalidArgument, "delta must be positive");
  }
  const double inner_tol = std::min(1e-10, delta * delta * 1e-2);
  const std::size_t m = objective.dim_alpha();
  std::vector<double> out(m, 0.0);
  std::vector<double> alpha_pt = alpha;
  for (std::size_t a = 0; a < m; ++a) {
    alpha_pt[a] = alpha[a] + delta;
    const auto wp = solve_inner(objective, alpha_pt, omega_init, inner_tol);
    const double lp = objective.val_eval(wp, alpha_pt, {false, false}).loss;
    alpha_pt[a] = alpha[a] - delta;
    const auto wm = solve_inner(objective, alpha_pt, omega_init, inner_tol);
    const double lm = objective.val_eval(wm, alpha_pt, {false, false}).loss;
    alpha_pt[a] = alpha[a];
    out[a] = (lp - lm) / (2.0 * delta);
  }
  return out;
}

namespace {

/// Deterministic random orthogonal matrix from a seeded Gaussian via QR.
Eigen::MatrixXd random_orthogonal(std::size_t n, Rng& rng) {
  Eigen::MatrixXd g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  // fix the sign ambiguity so the result is unique
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

void fill_symmetric(std::vector<double>& m, std::size_t n, Rng& rng,
                    double scale) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = rng.normal(0.0, scale);
      m[i * n + j] = v;
      m[j * n + i] = v;
    }
  }
}

nlohmann::json matrix_json(const std::vector<double>& m, std::size_t rows,
                           std::size_t cols) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < cols; ++j) row.push_back(m[i * cols + j]);
    out.push_back(row);
  }
  return out;
}

const char* variant_name(InstanceVariant v) {
  switch (v) {
    case InstanceVariant::General: return "general";
    case InstanceVariant::IsotropicH: return "isotropic_h";
    case InstanceVariant::CommutingH: return "commuting_h";
  }
  return "unknown";
}

}  // namespace

QuadraticInstance make_quadratic_instance(const InstanceOptions& options) {
  check_cap(options.dim_omega, options.dim_alpha);
  if (!(options.condition_target >= 1.0)) {
    throw Error(Status::InvalidArgument, "condition target must be >= 1");
  }
  const std::size_t n = options.dim_omega;
  const std::size_t m = options.dim_alpha;
  Rng rng(options.seed);
  QuadraticInstance inst{options, QuadraticBilevelObjective(n, m)};
  auto& obj = inst.objective;

  Eigen::MatrixXd U = random_orthogonal(n, rng);
  Eigen::VectorXd spectrum(n);
  // spread over [1, condition_target], endpoints pinned
  for (std::size_t i = 0; i < n; ++i) {
    double u = (n == 1) ? 0.0 : static_cast<double>(i) / (n - 1);
    spectrum(i) = std::pow(options.condition_target, u);
  }

  switch (options.variant) {
    case InstanceVariant::IsotropicH: {
      const double cscale = rng.uniform(0.5, 4.0);
      for (std::size_t i = 0; i < n; ++i) obj.P[i * n + i] = cscale;
      for (auto& v : obj.Q) v = rng.normal();
      break;
    }
    case InstanceVariant::General: {
      Eigen::MatrixXd P = U * spectrum.asDiagonal() * U.transpose();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          obj.P[i * n + j] = 0.5 * (P(i, j) + P(j, i));
        }
      }
      for (auto& v : obj.Q) v = rng.normal();
      break;
    }
    case InstanceVariant::CommutingH: {
      Eigen::MatrixXd P = U * spectrum.asDiagonal() * U.transpose();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          obj.P[i * n + j] = 0.5 * (P(i, j) + P(j, i));
        }
      }
      // J = V [diag(sqrt(a)) 0] U' so that J'J = U diag(a,0) U' commutes
      // with P; Q = J'
      Eigen::MatrixXd V = random_orthogonal(m, rng);
      Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m, n);
      for (std::size_t k = 0; k < std::min(m, n); ++k) {
        D(k, k) = std::sqrt(rng.uniform(0.1, 4.0));
      }
      Eigen::MatrixXd J = V * D * U.transpose();
      for (std::size_t w = 0; w < n; ++w) {
        for (std::size_t a = 0; a < m; ++a) obj.Q[w * m + a] = J(a, w);
      }
      break;
    }
  }

  fill_symmetric(obj.R, n, rng, 1.0);
  fill_symmetric(obj.T, m, rng, 1.0);
  for (auto& v : obj.S) v = rng.normal();
  for (auto& v : obj.c) v = rng.normal();
  for (auto& v : obj.r) v = rng.normal();
  for (auto& v : obj.s) v = rng.normal();
  return inst;
}

CurvatureBundle QuadraticInstance::analytic_bundle(
    const std::vector<double>& alpha) const {
  const std::size_t n = objective.dim_omega();
  const std::size_t m = objective.dim_alpha();
  CurvatureBundle bundle;
  bundle.dim_omega = n;
  bundle.dim_alpha = m;
  bundle.H = objective.hessian();
  bundle.J = objective.mixed_partial();
  const auto wstar = objective.closed_form_inner(alpha);
  bundle.v = objective.val_omega_grad(wstar, alpha);
  return bundle;
}

std::string QuadraticInstance::to_json() const {
  const std::size_t n = objective.dim_omega();
  const std::size_t m = objective.dim_alpha();
  nlohmann::json j{
      {"dim_omega", n},
      {"dim_alpha", m},
      {"seed", options.seed},
      {"variant", variant_name(options.variant)},
      {"condition_target", options.condition_target},
      {"P", matrix_json(objective.P, n, n)},
      {"Q", matrix_json(objective.Q, n, m)},
      {"R", matrix_json(objective.R, n, n)},
      {"S", matrix_json(objective.S, n, m)},
      {"T", matrix_json(objective.T, m, m)},
      {"c", matrix_json(objective.c, 1, n)},
      {"r", matrix_json(objective.r, 1, n)},
      {"s", matrix_json(objective.s, 1, m)},
  };
  return canonical_json(j);
}

}  // namespace ag
