#include "archgrad.h"

#include <exception>
#include <string>

#include "archgrad/checks.hpp"
#include "archgrad/jsonio.hpp"
#include "archgrad/oracle.hpp"
#include "archgrad/search.hpp"
#include "archgrad/status.hpp"

using namespace ag;

namespace {

thread_local std::string t_last_error;

ag_status to_c_status(Status s) {
  switch (s) {
    case Status::Ok: return AG_OK;
    case Status::InvalidArgument: return AG_ERR_INVALID_ARGUMENT;
    case Status::ShapeMismatch: return AG_ERR_SHAPE_MISMATCH;
    case Status::NonScalarOutput: return AG_ERR_NON_SCALAR_OUTPUT;
    case Status::DegenerateDirection: return AG_ERR_DEGENERATE_DIRECTION;
    case Status::NonConvergence: return AG_ERR_NON_CONVERGENCE;
    case Status::SingularHessian: return AG_ERR_SINGULAR_HESSIAN;
    case Status::Diverged: return AG_ERR_DIVERGED;
    case Status::NonFinite: return AG_ERR_NON_FINITE;
    case Status::CapExceeded: return AG_ERR_CAP_EXCEEDED;
    case Status::Config: return AG_ERR_CONFIG;
    case Status::Io: return AG_ERR_IO;
    case Status::Internal: return AG_ERR_INTERNAL;
  }
  return AG_ERR_INTERNAL;
}

template <typename Fn>
ag_status guarded(Fn&& fn) {
  try {
    fn();
    return AG_OK;
  } catch (const Error& e) {
    t_last_error = e.what();
    return to_c_status(e.status());
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return AG_ERR_INTERNAL;
  } catch (...) {
    t_last_error = "unknown error";
    return AG_ERR_INTERNAL;
  }
}

EstimatorKind estimator_from_c(const char* name, double eta, double xi,
                               double delta) {
  if (!name) {
    throw Error(Status::InvalidArgument, "estimator name is null");
  }
  EstimatorKind kind;
  kind.type = EstimatorKind::type_from_name(name);
  kind.eta = eta;
  kind.xi = xi;
  kind.delta = delta;
  return kind;
}

}  // namespace

struct ag_toy_result {
  ToyRunResult result;
  std::string csv;
  std::string summary;
};

struct ag_search_config {
  SearchConfig config;
  std::string json_cache;
};

struct ag_search_result {
  SearchResult result;
  std::string csv;
  std::string genotype_json;
};

struct ag_retrain_report {
  RetrainResult result;
  std::string json;
};

struct ag_oracle_report {
  OracleCheckReport report;
};

struct ag_gradcheck_report {
  GradcheckSuiteReport report;
  std::string text;
};

extern "C" {

const char* ag_version(void) { return "0.1.0"; }

const char* ag_status_name(ag_status status) {
  switch (status) {
    case AG_OK: return "ok";
    case AG_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case AG_ERR_SHAPE_MISMATCH: return "shape_mismatch";
    case AG_ERR_NON_SCALAR_OUTPUT: return "non_scalar_output";
    case AG_ERR_DEGENERATE_DIRECTION: return "degenerate_direction";
    case AG_ERR_NON_CONVERGENCE: return "non_convergence";
    case AG_ERR_SINGULAR_HESSIAN: return "singular_hessian";
    case AG_ERR_DIVERGED: return "diverged";
    case AG_ERR_NON_FINITE: return "non_finite";
    case AG_ERR_CAP_EXCEEDED: return "cap_exceeded";
    case AG_ERR_CONFIG: return "config";
    case AG_ERR_IO: return "io";
    case AG_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* ag_last_error(void) { return t_last_error.c_str(); }

void ag_toy_options_init(ag_toy_options* opt) {
  if (!opt) return;
  opt->estimator = "amended";
  opt->eta = 0.5;  /* above this instance's sign threshold of 0.125 */
  opt->xi = 1.0;
  opt->delta = 1e-3;
  opt->steps = 400;
  opt->alpha_lr = 0.05;
  opt->alpha_init = 0.5;
}

ag_status ag_toy_run(const ag_toy_options* opt, ag_toy_result** out) {
  if (!opt || !out) {
    t_last_error = "null argument";
    return AG_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    ToyRunConfig cfg;
    cfg.estimator =
        estimator_from_c(opt->estimator, opt->eta, opt->xi, opt->delta);
    if (opt->steps <= 0) {
      throw Error(Status::InvalidArgument, "steps must be positive");
    }
    cfg.steps = static_cast<std::size_t>(opt->steps);
    cfg.alpha_lr = opt->alpha_lr;
    cfg.alpha_init = opt->alpha_init;
    auto* res = new ag_toy_result{toy_run(cfg), "", ""};
    res->csv = res->result.to_csv();
    res->summary = res->result.summary_json();
    *out = res;
  });
}

int ag_toy_converged(const ag_toy_result* res) {
  return res && res->result.converged ? 1 : 0;
}

long ag_toy_diverged_step(const ag_toy_result* res) {
  return res ? res->result.diverged_step : -1;
}

double ag_toy_final_alpha(const ag_toy_result* res) {
  return res ? res->result.final_alpha : 0.0;
}

const char* ag_toy_trajectory_csv(const ag_toy_result* res) {
  return res ? res->csv.c_str() : "";
}

const char* ag_toy_summary_json(const ag_toy_result* res) {
  return res ? res->summary.c_str() : "";
}

void ag_toy_result_free(ag_toy_result* res) { delete res; }

ag_status ag_search_config_new(ag_search_config** out) {
  if (!out) {
    t_last_error = "null argument";
    return AG_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] { *out = new ag_search_config{}; });
}

ag_status ag_search_config_load(const char* path, ag_search_config** out) {
  if (!path || !out) {
    t_last_error = "null argument";
    return AG_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    *out = new ag_search_config{load_search_config(path), ""};
  });
}

ag_status ag_search_config_set(ag_search_config* cfg, const char* key,
                               const char* value) {
  if (!cfg || !key || !value) {
    t_last_error = "null argument";
    return AG_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] { apply_config_override(cfg->config, key, value); });
}

const char* ag_search_config_json(ag_search_config* cfg) {
  if (!cfg) return "";
  try {
    cfg->json_cache = search_config_json(cfg->config);
  } catch (const std::exception& e) {
    t_last_error = e.what();
    cfg->json_cache = "";
  }
  return cfg->json_cache.c_str();
}

void ag_search_config_free(ag_search_config* cfg) { delete cfg; }

ag_status ag_search_run(const ag_search_config* cfg, ag_search_result** out) {
  if (!cfg || !out) {
    t_last_error = "null argument";
    return AG_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    cfg->config.validate();
    auto* res = new ag_search_result{run_search(cfg->config), "", ""};
    res->csv = res->result.trajectory.to_csv();
    res->genotype_json = res->result.genotype.to_json();
    *out = res;
  });
}

const char* ag_search_trajectory_csv(const ag_search_result* res) {
  return res ? res->csv.c_str() : "";
}

const char* ag_search_genotype_json(const ag_search_result* res) {
  return res ? res->genotype_json.c_str() : "";
}

double ag_search_final_val_acc(const ag_search_result* res) {
  return res ? res->result.final_val_acc : 0.0;
}

double ag_search_final_skip_ratio(const ag_search_result* res) {
  return res ? res->result.final_skip_ratio : 0.0;
}

double ag_search_final_none_weight(const ag_search_result* res) {
  return res ? res->result.final_none_weight : 0.0;
}

void ag_search_result_free(ag_search_result* res) { delete res; }

ag_status ag_search_retrain(const ag_search_result* res,
                            const ag_search_config* cfg,
                            ag_retrain_report** out) {
  if (!res || !cfg || !out) {
    t_last_error = "null argument";
    return AG_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    const auto& c = cfg->config;
    auto* rep = new ag_retrain_report{
        retrain(res->result.genotype, res->result.net, c.retrain_training(),
                c.dataset, c.seed),
        ""};
    nlohmann::json j{{"accuracy", rep->result.accuracy},
                     {"loss_curve", rep->result.loss_curve},
                     {"training", nlohmann::json::parse(training_config_json(
                                      c.retrain_training()))}};
    rep->json = canonical_json(j);
    *out = rep;
  });
}

double ag_retrain_accuracy(const ag_retrain_report* rep) {
  return rep ? rep->result.accuracy : 0.0;
}

const char* ag_retrain_json(const ag_retrain_report* rep) {
  return rep ? rep->json.c_str() : "";
}

void ag_retrain_report_free(ag_retrain_report* rep) { delete rep; }

void ag_oracle_options_init(ag_oracle_options* opt) {
  if (!opt) return;
  opt->instances = 50;
  opt->dim_omega = 8;
  opt->dim_alpha = 4;
  opt->eta = 0.1;
  opt->seed = 1;
  opt->commuting_instances = 100;
  opt->general_instances = 50;
  opt->condition_target = 100.0;
}

ag_status ag_oracle_check(const ag_oracle_options* opt,
                          ag_oracle_report** out) {
  if (!opt || !out) {
    t_last_error = "null argument";
    return AG_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    if (opt->instances < 0 || opt->dim_omega <= 0 || opt->dim_alpha <= 0 ||
        opt->commuting_instances < 0 || opt->general_instances < 0) {
      throw Error(Status::InvalidArgument, "oracle options out of range");
    }
    if (static_cast<std::size_t>(opt->dim_omega) > kOracleDimCap ||
        static_cast<std::size_t>(opt->dim_alpha) > kOracleDimCap) {
      throw Error(Status::CapExceeded,
                  "oracle dimensions capped at " +
                      std::to_string(kOracleDimCap));
    }
    OracleCheckOptions o;
    o.instances = static_cast<std::size_t>(opt->instances);
    o.dim_omega = static_cast<std::size_t>(opt->dim_omega);
    o.dim_alpha = static_cast<std::size_t>(opt->dim_alpha);
    o.eta = opt->eta;
    o.seed = opt->seed;
    o.commuting_instances =
        static_cast<std::size_t>(opt->commuting_instances);
    o.general_instances = static_cast<std::size_t>(opt->general_instances);
    o.condition_target = opt->condition_target;
    *out = new ag_oracle_report{run_oracle_check(o)};
  });
}

int ag_oracle_passed(const ag_oracle_report* rep) {
  return rep && rep->report.passed ? 1 : 0;
}

double ag_oracle_max_cross_error(const ag_oracle_report* rep) {
  return rep ? rep->report.max_cross_error : 0.0;
}

double ag_oracle_min_commuting_ip(const ag_oracle_report* rep) {
  return rep ? rep->report.min_commuting_ip : 0.0;
}

double ag_oracle_general_nonneg_fraction(const ag_oracle_report* rep) {
  return rep ? rep->report.general_nonneg_fraction : 0.0;
}

long ag_oracle_singular_skipped(const ag_oracle_report* rep) {
  return rep ? static_cast<long>(rep->report.singular_skipped) : 0;
}

const char* ag_oracle_text(const ag_oracle_report* rep) {
  return rep ? rep->report.text.c_str() : "";
}

void ag_oracle_report_free(ag_oracle_report* rep) { delete rep; }

void ag_gradcheck_options_init(ag_gradcheck_options* opt) {
  if (!opt) return;
  opt->seeds = 100;
  opt->tolerance = 1e-5;
  opt->quad_tolerance = 1e-8;
  opt->inject_fault = 0;
}

ag_status ag_gradcheck_run(const ag_gradcheck_options* opt,
                           ag_gradcheck_report** out) {
  if (!opt || !out) {
    t_last_error = "null argument";
    return AG_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    if (opt->seeds <= 0 || !(opt->tolerance > 0.0) ||
        !(opt->quad_tolerance > 0.0)) {
      throw Error(Status::InvalidArgument, "gradcheck options out of range");
    }
    GradcheckSuiteOptions o;
    o.seeds = static_cast<std::size_t>(opt->seeds);
    o.tolerance = opt->tolerance;
    o.quad_tolerance = opt->quad_tolerance;
    o.inject_fault = opt->inject_fault != 0;
    auto* rep = new ag_gradcheck_report{run_gradcheck_suite(o), ""};
    rep->text = rep->report.text();
    *out = rep;
  });
}

int ag_gradcheck_passed(const ag_gradcheck_report* rep) {
  return rep && rep->report.passed ? 1 : 0;
}

double ag_gradcheck_max_error(const ag_gradcheck_report* rep) {
  return rep ? rep->report.max_error : 0.0;
}

const char* ag_gradcheck_text(const ag_gradcheck_report* rep) {
  return rep ? rep->text.c_str() : "";
}

void ag_gradcheck_report_free(ag_gradcheck_report* rep) { delete rep; }

}  // extern "C"
