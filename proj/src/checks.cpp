#include "archgrad/checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "archgrad/bilevel.hpp"
#include "archgrad/gradcheck.hpp"
#include "archgrad/jsonio.hpp"
#include "archgrad/oracle.hpp"
#include "archgrad/rng.hpp"
#include "archgrad/search.hpp"
#include "archgrad/status.hpp"
#include "archgrad/tape.hpp"

namespace ag {

namespace {

// A gradcheck target described by a tape-building closure over one flat
// parameter leaf layout; the value path re-runs the same construction.
struct OpTarget {
  std::string name;
  bool quadratic = false;  // piecewise-linear-free polynomial composition
  std::function<std::vector<double>(Rng&)> sample;
  std::function<double(const std::vector<double>&, bool wrong)> value;
  // reverse-mode gradient via the tape
  std::function<std::vector<double>(const std::vector<double>&)> gradient;
};

// Scalarize a tensor output against fixed weights so gradients are
// non-uniform: sum(out * w).
ValueRef weighted_sum(Tape& t, ValueRef out, double scale = 0.37) {
  const auto& v = t.value(out);
  Tensor w(v.shape());
  for (std::size_t i = 0; i < w.numel(); ++i) {
    w[i] = scale * (1.0 + static_cast<double>(i % 7));
  }
  return t.sum(t.mul(out, t.constant(std::move(w))));
}

template <typename Build>
OpTarget make_target(std::string name, bool quadratic, std::size_t dim,
                     Build build) {
  OpTarget target;
  target.name = std::move(name);
  target.quadratic = quadratic;
  target.sample = [dim](Rng& rng) { return rng.normal_vector(dim); };
  target.value = [build](const std::vector<double>& p, bool) {
    Tape t;
    ValueRef out = build(t, p);
    return t.value(out)[0];
  };
  target.gradient = [build](const std::vector<double>& p) {
    Tape t;
    ValueRef out = build(t, p);
    return t.backward(out, {"p"}).flat("p");
  };
  return target;
}

std::vector<OpTarget> build_targets(bool inject_fault) {
  std::vector<OpTarget> targets;

  targets.push_back(make_target(
      "add", true, 8, [](Tape& t, const std::vector<double>& p) {
        auto a = t.leaf(Tensor({4}, {p[0], p[1], p[2], p[3]}), "p");
        auto b = t.leaf(Tensor({4}, {p[4], p[5], p[6], p[7]}), "p");
        return weighted_sum(t, t.add(a, b));
      }));
  targets.push_back(make_target(
      "subtract", true, 8, [](Tape& t, const std::vector<double>& p) {
        auto a = t.leaf(Tensor({4}, {p[0], p[1], p[2], p[3]}), "p");
        auto b = t.leaf(Tensor({4}, {p[4], p[5], p[6], p[7]}), "p");
        return weighted_sum(t, t.sub(a, b));
      }));
  targets.push_back(make_target(
      "elementwise-multiply", true, 8,
      [](Tape& t, const std::vector<double>& p) {
        auto a = t.leaf(Tensor({4}, {p[0], p[1], p[2], p[3]}), "p");
        auto b = t.leaf(Tensor({4}, {p[4], p[5], p[6], p[7]}), "p");
        return weighted_sum(t, t.mul(a, b));
      }));
  targets.push_back(make_target(
      "matrix-multiply", true, 12, [](Tape& t, const std::vector<double>& p) {
        auto a = t.leaf(Tensor({2, 3}, {p[0], p[1], p[2], p[3], p[4], p[5]}),
                        "p");
        auto b = t.leaf(Tensor({3, 2}, {p[6], p[7], p[8], p[9], p[10], p[11]}),
                        "p");
        return weighted_sum(t, t.matmul(a, b));
      }));
  targets.push_back(make_target(
      "scalar-scale", true, 5, [](Tape& t, const std::vector<double>& p) {
        auto a = t.leaf(Tensor({4}, {p[0], p[1], p[2], p[3]}), "p");
        auto s = t.leaf(Tensor({1}, {p[4]}), "p");
        auto fixed = t.scale(a, 1.7);      // constant factor
        auto dynamic = t.scale(fixed, s);  // recorded scalar factor
        return weighted_sum(t, dynamic);
      }));
  targets.push_back(make_target(
      "tanh", false, 6, [](Tape& t, const std::vector<double>& p) {
        auto a = t.leaf(Tensor({6}, p), "p");
        return weighted_sum(t, t.tanh(a));
      }));
  {
    OpTarget relu = make_target(
        "relu", false, 6, [](Tape& t, const std::vector<double>& p) {
          auto a = t.leaf(Tensor({6}, p), "p");
          return weighted_sum(t, t.relu(a));
        });
    // keep every coordinate at least 1e-3 away from the kink
    relu.sample = [](Rng& rng) {
      std::vector<double> p(6);
      for (auto& v : p) {
        do {
          v = rng.normal();
        } while (std::fabs(v) < 1e-3);
      }
      return p;
    };
    targets.push_back(std::move(relu));
  }
  targets.push_back(make_target(
      "softmax-over-last-axis", false, 6,
      [](Tape& t, const std::vector<double>& p) {
        auto a = t.leaf(Tensor({2, 3}, p), "p");
        return weighted_sum(t, t.softmax_last_axis(a));
      }));
  {
    OpTarget log_target = make_target(
        "log", false, 5, [](Tape& t, const std::vector<double>& p) {
          auto a = t.leaf(Tensor({5}, p), "p");
          return weighted_sum(t, t.log(a));
        });
    log_target.sample = [](Rng& rng) {
      std::vector<double> p(5);
      for (auto& v : p) v = 0.5 + rng.uniform(0.0, 2.0);
      return p;
    };
    targets.push_back(std::move(log_target));
  }
  targets.push_back(make_target(
      "sum", true, 5, [](Tape& t, const std::vector<double>& p) {
        auto a = t.leaf(Tensor({5}, p), "p");
        auto b = t.mul(a, a);
        return t.sum(b);
      }));
  targets.push_back(make_target(
      "mean", true, 6, [](Tape& t, const std::vector<double>& p) {
        auto a = t.leaf(Tensor({6}, p), "p");
        return t.mean(t.mul(a, a));
      }));
  targets.push_back(make_target(
      "squared-error", true, 8, [](Tape& t, const std::vector<double>& p) {
        auto a = t.leaf(Tensor({4}, {p[0], p[1], p[2], p[3]}), "p");
        auto b = t.leaf(Tensor({4}, {p[4], p[5], p[6], p[7]}), "p");
        return t.squared_error(a, b);
      }));
  targets.push_back(make_target(
      "softmax-cross-entropy-with-integer-labels", false, 6,
      [](Tape& t, const std::vector<double>& p) {
        auto logits = t.leaf(Tensor({2, 3}, p), "p");
        return t.softmax_cross_entropy(logits, {1, 2});
      }));
  targets.push_back(make_target(
      "concatenate", true, 8, [](Tape& t, const std::vector<double>& p) {
        auto a = t.leaf(Tensor({2, 2}, {p[0], p[1], p[2], p[3]}), "p");
        auto b = t.leaf(Tensor({2, 2}, {p[4], p[5], p[6], p[7]}), "p");
        return weighted_sum(t, t.concat({a, b}));
      }));
  targets.push_back(make_target(
      "affine", true, 14, [](Tape& t, const std::vector<double>& p) {
        auto x = t.leaf(Tensor({2, 3}, {p[0], p[1], p[2], p[3], p[4], p[5]}),
                        "p");
        auto w = t.leaf(Tensor({3, 2}, {p[6], p[7], p[8], p[9], p[10], p[11]}),
                        "p");
        auto b = t.leaf(Tensor({2}, {p[12], p[13]}), "p");
        return weighted_sum(t, t.affine(x, w, b));
      }));

  if (inject_fault) {
    // known-bad gradient; the harness must flag it
    OpTarget bad;
    bad.name = "injected-wrong-gradient";
    bad.quadratic = false;
    bad.sample = [](Rng& rng) { return rng.normal_vector(3); };
    bad.value = [](const std::vector<double>& p, bool) {
      return p[0] * p[0] + p[1] * p[2];
    };
    bad.gradient = [](const std::vector<double>& p) {
      return std::vector<double>{p[0], p[2], p[1]};  // missing the factor 2
    };
    targets.push_back(std::move(bad));
  }
  return targets;
}

GradcheckSuiteEntry check_supernet(const GradcheckSuiteOptions& opt) {
  SuperNetConfig cfg;
  cfg.nodes_per_cell = 2;
  cfg.feature_dim = 3;
  cfg = cfg.normalized();
  GradcheckSuiteEntry entry{"super-network-loss", 0.0, opt.tolerance, false};

  Rng rng(20240001);
  const std::size_t runs = std::max<std::size_t>(1, opt.seeds / 10);
  for (std::size_t run = 0; run < runs; ++run) {
    Batch batch;
    batch.points = Tensor({4, 2});
    for (auto& v : batch.points.data()) v = rng.normal();
    batch.labels = {0, 1, 0, 1};
    SupernetBilevelObjective obj(cfg, ArchParams::zeros(cfg), batch, batch);
    const std::size_t n = obj.dim_omega(), m = obj.dim_alpha();
    std::vector<double> point(n + m);
    for (auto& v : point) v = rng.normal(0.0, 0.6);

    GradcheckTarget target;
    target.value = [&](const std::vector<double>& p) {
      std::vector<double> w(p.begin(), p.begin() + n);
      std::vector<double> a(p.begin() + n, p.end());
      return obj.train_eval(w, a, {false, false}).loss;
    };
    target.gradient = [&](const std::vector<double>& p) {
      std::vector<double> w(p.begin(), p.begin() + n);
      std::vector<double> a(p.begin() + n, p.end());
      auto e = obj.train_eval(w, a, {true, true});
      std::vector<double> g = std::move(e.grad_omega);
      g.insert(g.end(), e.grad_alpha.begin(), e.grad_alpha.end());
      return g;
    };
    entry.max_error =
        std::max(entry.max_error, gradcheck(target, point, opt.step));
  }
  entry.passed = entry.max_error < entry.tolerance;
  return entry;
}

}  // namespace

std::string GradcheckSuiteReport::text() const {
  std::string out;
  for (const auto& e : entries) {
    out += e.passed ? "[pass] " : "[FAIL] ";
    out += e.name;
    out += ": max_error=" + format_double(e.max_error);
    out += " tolerance=" + format_double(e.tolerance);
    out += '\n';
  }
  out += passed ? "gradcheck: all targets passed\n"
                : "gradcheck: FAILURES present\n";
  return out;
}

GradcheckSuiteReport run_gradcheck_suite(const GradcheckSuiteOptions& opt) {
  GradcheckSuiteReport report;
  report.passed = true;

  for (const auto& target : build_targets(opt.inject_fault)) {
    GradcheckSuiteEntry entry;
    entry.name = target.name;
    entry.tolerance = target.quadratic ? opt.quad_tolerance : opt.tolerance;
    Rng rng(fnv1a_hash(target.name.data(), target.name.size()));
    for (std::size_t s = 0; s < opt.seeds; ++s) {
      const auto point = target.sample(rng);
      GradcheckTarget gc;
      gc.value = [&](const std::vector<double>& p) {
        return target.value(p, false);
      };
      gc.gradient = target.gradient;
      entry.max_error =
          std::max(entry.max_error, gradcheck(gc, point, opt.step));
    }
    entry.passed = entry.max_error < entry.tolerance;
    report.passed = report.passed && entry.passed;
    report.max_error = std::max(report.max_error, entry.max_error);
    report.entries.push_back(std::move(entry));
  }

  auto net_entry = check_supernet(opt);
  report.passed = report.passed && net_entry.passed;
  report.max_error = std::max(report.max_error, net_entry.max_error);
  report.entries.push_back(std::move(net_entry));
  return report;
}

namespace {

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace

OracleCheckReport run_oracle_check(const OracleCheckOptions& opt) {
  OracleCheckReport report;
  report.passed = true;
  report.min_commuting_ip = std::numeric_limits<double>::infinity();
  std::string& text = report.text;

  // the scalar two-sample instance, with its known implicit quantities
  {
    ToyBilevelObjective toy;
    const double a = 1.0;
    auto bundle = extract_curvature(toy, {a}, {a});
    auto res = inner_product_check(bundle, opt.eta);
    text += "toy instance: g2=" + format_double(res.g2[0]) +
            " (4a), g2'=" + format_double(res.g2prime[0]) + " (16*eta*a), ip=" +
            format_double(res.ip) + "\n";
  }

  for (std::size_t i = 0; i < opt.instances; ++i) {
    InstanceOptions io;
    io.dim_omega = opt.dim_omega;
    io.dim_alpha = opt.dim_alpha;
    io.condition_target = opt.condition_target;
    io.variant = InstanceVariant::General;
    io.seed = opt.seed + i;
    const auto inst = make_quadratic_instance(io);
    Rng rng(io.seed ^ 0x5bf03635ULL);
    const auto alpha = rng.normal_vector(io.dim_alpha);
    try {
      const auto wstar = solve_inner(inst.objective, alpha,
                                     std::vector<double>(io.dim_omega, 0.0));
      const auto bundle = extract_curvature(inst.objective, wstar, alpha);
      auto total = inst.objective.val_eval(wstar, alpha, {false, true})
                       .grad_alpha;
      const auto g2 = exact_g2(bundle);
      for (std::size_t k = 0; k < total.size(); ++k) total[k] += g2[k];
      const auto brute =
          brute_force_hypergradient(inst.objective, alpha,
                                    std::vector<double>(io.dim_omega, 0.0));
      const double err = rel_err(total, brute);
      report.max_cross_error = std::max(report.max_cross_error, err);
      const bool ok = err < opt.cross_tolerance;
      report.passed = report.passed && ok;
      text += std::string(ok ? "[pass]" : "[FAIL]") + " cross-oracle seed=" +
              std::to_string(io.seed) + " rel_error=" + format_double(err) +
              "\n";
    } catch (const Error& e) {
      if (e.status() == Status::SingularHessian) {
        ++report.singular_skipped;
        text += "[skip] seed=" + std::to_string(io.seed) +
                " singular Hessian: " + e.what() + "\n";
        continue;
      }
      throw;
    }
  }

  for (std::size_t i = 0; i < opt.commuting_instances; ++i) {
    InstanceOptions io;
    io.dim_omega = opt.dim_omega;
    io.dim_alpha = (i % 2 == 0) ? opt.dim_omega : opt.dim_alpha;
    io.condition_target = opt.condition_target;
    io.variant = (i % 2 == 0) ? InstanceVariant::CommutingH
                              : InstanceVariant::IsotropicH;
    io.seed = opt.seed + 10000 + i;
    const auto inst = make_quadratic_instance(io);
    Rng rng(io.seed ^ 0x9e3779b9ULL);
    const auto alpha = rng.normal_vector(io.dim_alpha);
    const auto bundle = inst.analytic_bundle(alpha);
    const auto res = inner_product_check(bundle, opt.eta);
    report.min_commuting_ip = std::min(report.min_commuting_ip, res.ip);
    if (res.ip < -1e-12) report.passed = false;
  }
  text += "commuting/isotropic instances: " +
          std::to_string(opt.commuting_instances) +
          ", min ip=" + format_double(report.min_commuting_ip) + "\n";

  std::size_t nonneg = 0;
  for (std::size_t i = 0; i < opt.general_instances; ++i) {
    InstanceOptions io;
    io.dim_omega = opt.dim_omega;
    io.dim_alpha = opt.dim_alpha;
    io.condition_target = opt.condition_target;
    io.variant = InstanceVariant::General;
    io.seed = opt.seed + 20000 + i;
    const auto inst = make_quadratic_instance(io);
    Rng rng(io.seed ^ 0x517cc1b7ULL);
    const auto alpha = rng.normal_vector(io.dim_alpha);
    const auto res = inner_product_check(inst.analytic_bundle(alpha), opt.eta);
    if (res.ip >= 0.0) ++nonneg;
  }
  if (opt.general_instances > 0) {
    report.general_nonneg_fraction =
        static_cast<double>(nonneg) /
        static_cast<double>(opt.general_instances);
    // reported, not asserted: the property is only proved for commuting
    // spectra
    text += "general instances: nonnegative inner-product fraction = " +
            format_double(report.general_nonneg_fraction) + "\n";
  }
  return report;
}

}  // namespace ag
