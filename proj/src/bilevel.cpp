#include "archgrad/bilevel.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "archgrad/status.hpp"
#include "archgrad/tape.hpp"

namespace ag {

namespace {

// y += M x, M row-major (rows x cols)
void matvec_acc(const std::vector<double>& M, std::size_t rows,
                std::size_t cols, const std::vector<double>& x,
                std::vector<double>& y) {
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += M[i * cols + j] * x[j];
    y[i] += acc;
  }
}

// y += M' x, M row-major (rows x cols), result has cols entries
void matvec_t_acc(const std::vector<double>& M, std::size_t rows,
                  std::size_t cols, const std::vector<double>& x,
                  std::vector<double>& y) {
  for (std::size_t j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += M[i * cols + j] * x[i];
    y[j] += acc;
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

std::vector<double> BilevelObjective::closed_form_inner(
    const std::vector<double>&) const {
  throw Error(Status::InvalidArgument,
              "objective has no closed-form inner solution");
}

EvalResult ToyBilevelObjective::train_eval(const std::vector<double>& omega,
                                           const std::vector<double>& alpha,
                                           GradRequest req) const {
  Tape t;
  auto w = t.leaf(Tensor::scalar(omega.at(0)), "omega");
  auto a = t.leaf(Tensor::scalar(alpha.at(0)), "alpha");
  auto loss = t.squared_error(t.scale(w, 1.0), a);
  EvalResult out;
  out.loss = t.value(loss)[0];
  if (req.omega || req.alpha) {
    auto g = t.backward(loss, {"omega", "alpha"});
    if (req.omega) out.grad_omega = g.flat("omega");
    if (req.alpha) out.grad_alpha = g.flat("alpha");
  }
  return out;
}

EvalResult ToyBilevelObjective::val_eval(const std::vector<double>& omega,
                                         const std::vector<double>& alpha,
                                         GradRequest req) const {
  Tape t;
  auto w = t.leaf(Tensor::scalar(omega.at(0)), "omega");
  auto a = t.leaf(Tensor::scalar(alpha.at(0)), "alpha");
  auto loss = t.squared_error(t.scale(w, 2.0), a);
  EvalResult out;
  out.loss = t.value(loss)[0];
  if (req.omega || req.alpha) {
    auto g = t.backward(loss, {"omega", "alpha"});
    if (req.omega) out.grad_omega = g.flat("omega");
    if (req.alpha) out.grad_alpha = g.flat("alpha");
  }
  return out;
}

std::vector<double> ToyBilevelObjective::closed_form_inner(
    const std::vector<double>& alpha) const {
  return {alpha.at(0)};
}

QuadraticBilevelObjective::QuadraticBilevelObjective(std::size_t dim_omega,
                                                     std::size_t dim_alpha)
    : n_(dim_omega), m_(dim_alpha) {
  P.assign(n_ * n_, 0.0);
  Q.assign(n_ * m_, 0.0);
  R.assign(n_ * n_, 0.0);
  S.assign(n_ * m_, 0.0);
  T.assign(m_ * m_, 0.0);
  c.assign(n_, 0.0);
  r.assign(n_, 0.0);
  s.assign(m_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) P[i * n_ + i] = 1.0;
}

EvalResult QuadraticBilevelObjective::train_eval(
    const std::vector<double>& omega, const std::vector<double>& alpha,
    GradRequest req) const {
  std::vector<double> grad(n_, 0.0);  // P w + Q a + c
  matvec_acc(P, n_, n_, omega, grad);
  matvec_acc(Q, n_, m_, alpha, grad);
  for (std::size_t i = 0; i < n_; ++i) grad[i] += c[i];

  EvalResult out;
  // 1/2 w'(Pw) + w'(Qa) + c'w  =  1/2 w'(grad + c... ) computed directly
  std::vector<double> pw(n_, 0.0);
  matvec_acc(P, n_, n_, omega, pw);
  std::vector<double> qa(n_, 0.0);
  matvec_acc(Q, n_, m_, alpha, qa);
  out.loss = 0.5 * dot(omega, pw) + dot(omega, qa) + dot(c, omega);
  if (req.omega) out.grad_omega = grad;
  if (req.alpha) {
    out.grad_alpha.assign(m_, 0.0);  // Q' w
    matvec_t_acc(Q, n_, m_, omega, out.grad_alpha);
  }
  return out;
}

EvalResult QuadraticBilevelObjective::val_eval(
    const std::vector<double>& omega, const std::vector<double>& alpha,
    GradRequest req) const {
  std::vector<double> rw(n_, 0.0);
  matvec_acc(R, n_, n_, omega, rw);
  std::vector<double> sa(n_, 0.0);
  matvec_acc(S, n_, m_, alpha, sa);
  std::vector<double> ta(m_, 0.0);
  matvec_acc(T, m_, m_, alpha, ta);

  EvalResult out;
  out.loss = 0.5 * dot(omega, rw) + dot(omega, sa) + 0.5 * dot(alpha, ta) +
             dot(r, omega) + dot(s, alpha);
  if (req.omega) {
    out.grad_omega.assign(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      out.grad_omega[i] = rw[i] + sa[i] + r[i];
    }
  }
  if (req.alpha) {
    out.grad_alpha.assign(m_, 0.0);  // S'w + Ta + s
    matvec_t_acc(S, n_, m_, omega, out.grad_alpha);
    for (std::size_t i = 0; i < m_; ++i) out.grad_alpha[i] += ta[i] + s[i];
  }
  return out;
}

std::vector<double> QuadraticBilevelObjective::closed_form_inner(
    const std::vector<double>& alpha) const {
  // w*(a) = -P^{-1} (Qa + c)
  Eigen::MatrixXd Pm(n_, n_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) Pm(i, j) = P[i * n_ + j];
  }
  Eigen::VectorXd rhs(n_);
  std::vector<double> qa(n_, 0.0);
  matvec_acc(Q, n_, m_, alpha, qa);
  for (std::size_t i = 0; i < n_; ++i) rhs(i) = -(qa[i] + c[i]);
  Eigen::VectorXd w = Pm.ldlt().solve(rhs);
  std::vector<double> out(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = w(i);
  return out;
}

std::vector<double> QuadraticBilevelObjective::mixed_partial() const {
  std::vector<double> J(m_ * n_, 0.0);
  for (std::size_t a = 0; a < m_; ++a) {
    for (std::size_t w = 0; w < n_; ++w) J[a * n_ + w] = Q[w * m_ + a];
  }
  return J;
}

std::vector<double> QuadraticBilevelObjective::val_omega_grad(
    const std::vector<double>& omega, const std::vector<double>& alpha) const {
  std::vector<double> g(n_, 0.0);
  matvec_acc(R, n_, n_, omega, g);
  matvec_acc(S, n_, m_, alpha, g);
  for (std::size_t i = 0; i < n_; ++i) g[i] += r[i];
  return g;
}

std::vector<double> QuadraticBilevelObjective::analytic_hypergradient(
    const std::vector<double>& alpha) const {
  const auto wstar = closed_form_inner(alpha);
  auto g1 = val_eval(wstar, alpha, {/*omega=*/false, /*alpha=*/true})
                .grad_alpha;
  const auto v = val_omega_grad(wstar, alpha);

  Eigen::MatrixXd Pm(n_, n_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) Pm(i, j) = P[i * n_ + j];
  }
  Eigen::VectorXd vv(n_);
  for (std::size_t i = 0; i < n_; ++i) vv(i) = v[i];
  Eigen::VectorXd u = Pm.ldlt().solve(vv);  // H^{-1} v

  // g2 = -J u with J = Q'
  std::vector<double> uv(n_);
  for (std::size_t i = 0; i < n_; ++i) uv[i] = u(i);
  std::vector<double> g2(m_, 0.0);
  matvec_t_acc(Q, n_, m_, uv, g2);
  for (std::size_t i = 0; i < m_; ++i) g1[i] -= g2[i];
  return g1;
}

SupernetBilevelObjective::SupernetBilevelObjective(SuperNetConfig config,
                                                   ArchParams arch_template,
                                                   Batch train, Batch val,
                                                   ArchMode mode)
    : config_(config.normalized()),
      arch_template_(std::move(arch_template)),
      train_(std::move(train)),
      val_(std::move(val)),
      mode_(mode),
      layout_(supernet_omega_layout(config_)) {
  dim_alpha_ = mode_ == ArchMode::OperatorSearch
                   ? arch_template_.flat_alpha().size()
                   : arch_template_.flat_beta().size();
}

ArchParams SupernetBilevelObjective::materialize_arch(
    const std::vector<double>& alpha) const {
  ArchParams arch = arch_template_;
  if (mode_ == ArchMode::OperatorSearch) {
    arch.set_flat_alpha(alpha);
  } else {
    arch.set_flat_beta(alpha);
  }
  return arch;
}

EvalResult SupernetBilevelObjective::eval(const Batch& batch,
                                          const std::vector<double>& omega,
                                          const std::vector<double>& alpha,
                                          GradRequest req) const {
  const ArchParams arch = materialize_arch(alpha);
  Tape tape;
  auto fwd = supernet_forward(tape, config_, arch, omega, layout_, batch,
                              mode_);
  EvalResult out;
  out.loss = tape.value(fwd.loss)[0];
  if (req.omega || req.alpha) {
    std::set<std::string> groups;
    if (req.omega) groups.insert("omega");
    if (req.alpha) groups.insert("alpha");
    auto bundle = tape.backward(fwd.loss, groups);
    if (req.omega) out.grad_omega = bundle.flat("omega");
    if (req.alpha) out.grad_alpha = bundle.flat("alpha");
  }
  return out;
}

EvalResult SupernetBilevelObjective::train_eval(
    const std::vector<double>& omega, const std::vector<double>& alpha,
    GradRequest req) const {
  return eval(train_, omega, alpha, req);
}

EvalResult SupernetBilevelObjective::val_eval(
    const std::vector<double>& omega, const std::vector<double>& alpha,
    GradRequest req) const {
  return eval(val_, omega, alpha, req);
}

double SupernetBilevelObjective::val_accuracy(
    const std::vector<double>& omega, const std::vector<double>& alpha) const {
  const ArchParams arch = materialize_arch(alpha);
  Tape tape;
  auto fwd = supernet_forward(tape, config_, arch, omega, layout_, val_,
                              mode_);
  return accuracy_from_logits(tape.value(fwd.logits), val_.labels);
}

}  // namespace ag
