#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "archgrad/estimators.hpp"
#include "archgrad/oracle.hpp"
#include "archgrad/rng.hpp"
#include "archgrad/status.hpp"

using namespace ag;

namespace {

BilevelState toy_state(double alpha) {
  static ToyBilevelObjective toy;
  return {&toy, {alpha}, {alpha}};  // omega at its inner optimum
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace

TEST_CASE("g1 on the toy problem is -2 alpha") {
  for (double a : {-1.5, -0.3, 0.7, 1.0, 2.0}) {
    auto st = toy_state(a);
    auto g = g1(st);
    REQUIRE(g.size() == 1);
    CHECK(g[0] == doctest::Approx(-2.0 * a).epsilon(1e-12));
  }
}

TEST_CASE("g1 vanishes when the validation loss ignores alpha") {
  QuadraticBilevelObjective obj(3, 2);
  Rng rng(5);
  for (auto& v : obj.R) v = 0.0;
  obj.R[0] = obj.R[4] = obj.R[8] = 1.0;
  for (auto& v : obj.r) v = rng.normal();
  // S, T, s stay zero: L_val independent of alpha
  BilevelState st{&obj, {0.3, -0.2, 0.9}, {0.1, 0.4}};
  auto g = g1(st);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("epsilon scale") {
  CHECK(epsilon_scale({0.01}) == doctest::Approx(1.0));
  CHECK(epsilon_scale({2.0}) == doctest::Approx(0.005));
  CHECK(epsilon_scale({0.6, 0.8}) == doctest::Approx(0.01));
  CHECK_THROWS_AS((void)epsilon_scale({0.0, 0.0}), Error);
  try {
    (void)epsilon_scale({0.0});
  } catch (const Error& e) {
    CHECK(e.status() == Status::DegenerateDirection);
  }
}

TEST_CASE("amended g2 on the toy problem is 16 eta alpha") {
  // J = -2, H = 2, v = 4a  =>  -eta J H v = 16 eta a
  auto st = toy_state(1.0);
  auto g = amended_g2(st, 0.1);
  REQUIRE(g.size() == 1);
  CHECK(std::fabs(g[0] - 1.6) < 1e-9);

  auto st2 = toy_state(-0.75);
  auto g2v = amended_g2(st2, 0.5);
  CHECK(std::fabs(g2v[0] - 16.0 * 0.5 * (-0.75)) < 1e-9);
}

TEST_CASE("second-order darts g2 on the toy problem is 8 xi alpha") {
  auto st = toy_state(1.0);
  auto g = second_order_darts_g2(st, 1.0);
  REQUIRE(g.size() == 1);
  CHECK(std::fabs(g[0] - 8.0) < 1e-9);
}

TEST_CASE("eta and xi linearity on quadratic instances") {
  InstanceOptions opt;
  opt.dim_omega = 6;
  opt.dim_alpha = 3;
  opt.seed = 42;
  auto inst = make_quadratic_instance(opt);
  Rng rng(7);
  BilevelState st{&inst.objective, rng.normal_vector(6),
                  rng.normal_vector(3)};

  auto a1 = amended_g2(st, 0.2);
  auto a2 = amended_g2(st, 0.4);
  for (std::size_t i = 0; i < a1.size(); ++i) {
    CHECK(std::fabs(a2[i] - 2.0 * a1[i]) <=
          1e-9 * std::max(1.0, std::fabs(a2[i])));
  }

  auto s1 = second_order_darts_g2(st, 0.3);
  auto s2 = second_order_darts_g2(st, 0.9);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(std::fabs(s2[i] - 3.0 * s1[i]) <=
          1e-9 * std::max(1.0, std::fabs(s2[i])));
  }
}

TEST_CASE("separable losses give a vanishing implicit term") {
  QuadraticBilevelObjective obj(4, 3);  // Q = 0: train loss ignores alpha
  Rng rng(11);
  for (std::size_t i = 0; i < 4; ++i) obj.P[i * 4 + i] = 2.0;
  for (auto& v : obj.S) v = rng.normal();
  for (auto& v : obj.r) v = rng.normal();
  for (auto& v : obj.s) v = rng.normal();
  BilevelState st{&obj, rng.normal_vector(4), rng.normal_vector(3)};
  for (double v : amended_g2(st, 0.3)) CHECK(std::fabs(v) < 1e-7);
  for (double v : second_order_darts_g2(st, 1.0)) CHECK(std::fabs(v) < 1e-7);
}

TEST_CASE("amended matches dense algebra on quadratics") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    InstanceOptions opt;
    opt.dim_omega = 8;
    opt.dim_alpha = 4;
    opt.seed = seed;
    auto inst = make_quadratic_instance(opt);
    Rng rng(seed + 100);
    std::vector<double> alpha = rng.normal_vector(4);
    auto omega = inst.objective.closed_form_inner(alpha);
    BilevelState st{&inst.objective, omega, alpha};

    const double eta = 0.37;
    auto fd = amended_g2(st, eta);
    auto dense = inner_product_check(inst.analytic_bundle(alpha), eta);
    CHECK(rel_err(fd, dense.g2prime) < 1e-9);
  }
}

TEST_CASE("dispatcher on the toy problem") {
  auto st = toy_state(1.0);

  auto first = estimate_arch_gradient(EstimatorKind::first_order(), st);
  CHECK(first[0] == doctest::Approx(-2.0).epsilon(1e-12));

  auto amended = estimate_arch_gradient(EstimatorKind::amended(0.1), st);
  CHECK(std::fabs(amended[0] - (-0.4)) < 1e-9);

  auto exact = estimate_arch_gradient(EstimatorKind::exact_implicit(), st);
  CHECK(std::fabs(exact[0] - 2.0) < 1e-6);

  auto brute = estimate_arch_gradient(EstimatorKind::brute_force(1e-3), st);
  CHECK(std::fabs(brute[0] - 2.0) < 1e-6);
}

TEST_CASE("amended with eta zero is bit-identical to first-order") {
  Rng rng(1301);
  for (int trial = 0; trial < 20; ++trial) {
    InstanceOptions opt;
    opt.dim_omega = 5;
    opt.dim_alpha = 4;
    opt.seed = 9000 + static_cast<std::uint64_t>(trial);
    auto inst = make_quadratic_instance(opt);
    BilevelState st{&inst.objective, rng.normal_vector(5),
                    rng.normal_vector(4)};
    auto a = estimate_arch_gradient(EstimatorKind::first_order(), st);
    auto b = estimate_arch_gradient(EstimatorKind::amended(0.0), st);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("estimates are deterministic") {
  InstanceOptions opt;
  opt.seed = 77;
  auto inst = make_quadratic_instance(opt);
  Rng rng(3);
  BilevelState st{&inst.objective, rng.normal_vector(opt.dim_omega),
                  rng.normal_vector(opt.dim_alpha)};
  for (auto kind : {EstimatorKind::amended(0.25),
                    EstimatorKind::second_order(0.5),
                    EstimatorKind::first_order()}) {
    auto a = estimate_arch_gradient(kind, st);
    auto b = estimate_arch_gradient(kind, st);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("output length always matches dim alpha") {
  InstanceOptions opt;
  opt.dim_omega = 7;
  opt.dim_alpha = 5;
  opt.seed = 15;
  auto inst = make_quadratic_instance(opt);
  Rng rng(8);
  BilevelState st{&inst.objective, rng.normal_vector(7),
                  rng.normal_vector(5)};
  for (auto kind :
       {EstimatorKind::first_order(), EstimatorKind::amended(0.1),
        EstimatorKind::second_order(1.0), EstimatorKind::exact_implicit(),
        EstimatorKind::brute_force(1e-3)}) {
    CHECK(estimate_arch_gradient(kind, st).size() == 5);
  }
}

TEST_CASE("sign of the estimate on the toy problem") {
  // true hypergradient is 2a; the amended total is (16 eta - 2) a, so the
  // sign flips to correct only above eta = 0.125
  for (double a : {-1.2, -0.4, 0.3, 1.0}) {
    auto st = toy_state(a);
    const double truth = 2.0 * a;
    auto first = estimate_arch_gradient(EstimatorKind::first_order(), st);
    CHECK(first[0] * truth < 0.0);
    auto good = estimate_arch_gradient(EstimatorKind::amended(0.5), st);
    CHECK(good[0] * truth > 0.0);
    auto weak = estimate_arch_gradient(EstimatorKind::amended(0.01), st);
    CHECK(weak[0] * truth < 0.0);  // small eta behaves like first-order
  }
}

TEST_CASE("degenerate direction falls back to a zero correction") {
  QuadraticBilevelObjective obj(2, 2);  // L_val identically zero
  BilevelState st{&obj, {0.1, 0.2}, {0.3, 0.4}};
  auto g = amended_g2(st, 0.5);
  CHECK(g == std::vector<double>{0.0, 0.0});
}
