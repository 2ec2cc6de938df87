#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "archgrad/supernet.hpp"

namespace ag {

struct GradRequest {
  bool omega = false;
  bool alpha = false;
};

struct EvalResult {
  double loss = 0.0;
  std::vector<double> grad_omega;  // filled when requested
  std::vector<double> grad_alpha;
};

/// A bi-level problem surface: two scalar losses over disjoint parameter
/// vectors omega (inner) and alpha (outer), with first-order gradients.
class BilevelObjective {
 public:
  virtual ~BilevelObjective() = default;

  virtual std::size_t dim_omega() const = 0;
  virtual std::size_t dim_alpha() const = 0;

  virtual EvalResult train_eval(const std::vector<double>& omega,
                                const std::vector<double>& alpha,
                                GradRequest req) const = 0;
  virtual EvalResult val_eval(const std::vector<double>& omega,
                              const std::vector<double>& alpha,
                              GradRequest req) const = 0;

  virtual bool has_closed_form_inner() const { return false; }
  virtual std::vector<double> closed_form_inner(
      const std::vector<double>& alpha) const;
};

/// The scalar two-sample problem L(w, a; x) = (w x - a)^2 with x_train = 1
/// and x_val = 2. The inner optimum is w*(a) = a; evaluated on the tape so
/// the estimators exercise the same machinery as real networks.
class ToyBilevelObjective : public BilevelObjective {
 public:
  std::size_t dim_omega() const override { return 1; }
  std::size_t dim_alpha() const override { return 1; }
  EvalResult train_eval(const std::vector<double>& omega,
                        const std::vector<double>& alpha,
                        GradRequest req) const override;
  EvalResult val_eval(const std::vector<double>& omega,
                      const std::vector<double>& alpha,
                      GradRequest req) const override;
  bool has_closed_form_inner() const override { return true; }
  std::vector<double> closed_form_inner(
      const std::vector<double>& alpha) const override;
};

/// Quadratic bi-level instance with analytic gradients:
///   L_train = 1/2 w'Pw + w'Qa + c'w
///   L_val   = 1/2 w'Rw + w'Sa + 1/2 a'Ta + r'w + s'a
/// P symmetric positive-definite, R and T symmetric. The inner Hessian is P
/// and the mixed second derivative (alpha rows, omega columns) is Q'.
class QuadraticBilevelObjective : public BilevelObjective {
 public:
  QuadraticBilevelObjective(std::size_t dim_omega, std::size_t dim_alpha);

  std::size_t dim_omega() const override { return n_; }
  std::size_t dim_alpha() const override { return m_; }
  EvalResult train_eval(const std::vector<double>& omega,
                        const std::vector<double>& alpha,
                        GradRequest req) const override;
  EvalResult val_eval(const std::vector<double>& omega,
                      const std::vector<double>& alpha,
                      GradRequest req) const override;
  bool has_closed_form_inner() const override { return true; }
  std::vector<double> closed_form_inner(
      const std::vector<double>& alpha) const override;

  // row-major storage, publicly mutable by the instance generator
  std::vector<double> P, Q, R, S, T, c, r, s;

  std::vector<double> hessian() const { return P; }
  /// Mixed partial, dim_alpha x dim_omega (= Q transposed).
  std::vector<double> mixed_partial() const;
  std::vector<double> val_omega_grad(const std::vector<double>& omega,
                                     const std::vector<double>& alpha) const;
  /// Total hypergradient d/da L_val(w*(a), a) by dense algebra.
  std::vector<double> analytic_hypergradient(
      const std::vector<double>& alpha) const;

 private:
  std::size_t n_, m_;
};

/// Mixture super-network losses on fixed train / validation batches. The
/// outer vector is the flat alpha logits in operator search and the flat
/// beta logits in edge search.
class SupernetBilevelObjective : public BilevelObjective {
 public:
  SupernetBilevelObjective(SuperNetConfig config, ArchParams arch_template,
                           Batch train, Batch val,
                           ArchMode mode = ArchMode::OperatorSearch);

  std::size_t dim_omega() const override { return layout_.total; }
  std::size_t dim_alpha() const override { return dim_alpha_; }
  EvalResult train_eval(const std::vector<double>& omega,
                        const std::vector<double>& alpha,
                        GradRequest req) const override;
  EvalResult val_eval(const std::vector<double>& omega,
                      const std::vector<double>& alpha,
                      GradRequest req) const override;

  const SuperNetConfig& config() const { return config_; }
  const OmegaLayout& layout() const { return layout_; }
  ArchMode mode() const { return mode_; }
  const Batch& train_batch() const { return train_; }
  const Batch& val_batch() const { return val_; }

  /// Accuracy of the mixture network on the validation batch.
  double val_accuracy(const std::vector<double>& omega,
                      const std::vector<double>& alpha) const;

  ArchParams materialize_arch(const std::vector<double>& alpha) const;

 private:
  EvalResult eval(const Batch& batch, const std::vector<double>& omega,
                  const std::vector<double>& alpha, GradRequest req) const;

  SuperNetConfig config_;
  ArchParams arch_template_;
  Batch train_, val_;
  ArchMode mode_;
  OmegaLayout layout_;
  std::size_t dim_alpha_ = 0;
};

}  // namespace ag
