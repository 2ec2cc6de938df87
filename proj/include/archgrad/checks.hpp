#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ag {

struct GradcheckSuiteOptions {
  std::size_t seeds = 100;
  double tolerance = 1e-5;       // general compositions
  double quad_tolerance = 1e-8;  // piecewise-linear-free polynomial ops
  double step = 1e-5;
  bool inject_fault = false;     // testing hook: adds a known-bad gradient
};

struct GradcheckSuiteEntry {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradcheckSuiteReport {
  std::vector<GradcheckSuiteEntry> entries;
  bool passed = false;
  double max_error = 0.0;
  std::string text() const;
};

/// Central-difference validation of every tape op plus the full
/// super-network loss, over `seeds` random draws each.
GradcheckSuiteReport run_gradcheck_suite(const GradcheckSuiteOptions& opt);

struct OracleCheckOptions {
  std::size_t instances = 50;       // cross-oracle identity instances
  std::size_t dim_omega = 8;
  std::size_t dim_alpha = 4;
  double condition_target = 100.0;
  double eta = 0.1;
  std::uint64_t seed = 1;
  std::size_t commuting_instances = 100;  // asserted ip >= -1e-12
  std::size_t general_instances = 50;     // nonnegative fraction, report only
  double cross_tolerance = 1e-3;
};

struct OracleCheckReport {
  bool passed = false;
  double max_cross_error = 0.0;
  double min_commuting_ip = 0.0;
  double general_nonneg_fraction = 0.0;
  std::size_t singular_skipped = 0;
  std::string text;
};

/// Cross-validates the exact-implicit route against brute-force re-solve
/// differentiation on random quadratic instances, checks the inner-product
/// property on isotropic/commuting constructions, and reports (without
/// asserting) the nonnegative fraction on general instances.
OracleCheckReport run_oracle_check(const OracleCheckOptions& opt);

}  // namespace ag
