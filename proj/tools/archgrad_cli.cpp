// archgrad command-line tool. Everything goes through the C API in
// archgrad.h; this file owns flags, files, and exit codes only.
//
// Exit codes: 0 success, 1 numerical/assertion failure, 2 usage or
// configuration error.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "archgrad.h"

namespace {

int exit_code_for(ag_status status) {
  switch (status) {
    case AG_OK:
      return 0;
    case AG_ERR_INVALID_ARGUMENT:
    case AG_ERR_CONFIG:
    case AG_ERR_IO:
    case AG_ERR_CAP_EXCEEDED:
      return 2;
    default:
      return 1;
  }
}

int fail(ag_status status) {
  std::fprintf(stderr, "error (%s): %s\n", ag_status_name(status),
               ag_last_error());
  return exit_code_for(status);
}

std::string default_out_dir() {
  const char* env = std::getenv("ARCHGRAD_OUT");
  return env && *env ? env : ".";
}

void write_atomic(const std::filesystem::path& path,
                  const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

struct ManifestWriter {
  std::string command;
  nlohmann::json config;
  unsigned long long seed = 0;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();

  void write(const std::filesystem::path& dir) const {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    nlohmann::json j{{"command", command}, {"config", config},
                     {"seed", seed},       {"outputs", outputs},
                     {"version", ag_version()}, {"wall_time_s", wall}};
    write_atomic(dir / "manifest.json", j.dump(2) + "\n");
  }
};

int cmd_toy(const ag_toy_options& opt, const std::string& out_dir,
            bool expect_converge) {
  ag_toy_result* res = nullptr;
  const ag_status st = ag_toy_run(&opt, &res);
  if (st != AG_OK) return fail(st);

  std::filesystem::create_directories(out_dir);
  ManifestWriter manifest;
  manifest.command = "toy";
  manifest.config = {{"estimator", opt.estimator}, {"eta", opt.eta},
                     {"xi", opt.xi},               {"delta", opt.delta},
                     {"steps", opt.steps},         {"alpha_lr", opt.alpha_lr},
                     {"alpha_init", opt.alpha_init}};
  write_atomic(std::filesystem::path(out_dir) / "toy_trajectory.csv",
               ag_toy_trajectory_csv(res));
  write_atomic(std::filesystem::path(out_dir) / "toy_summary.json",
               ag_toy_summary_json(res));
  manifest.outputs = {"toy_trajectory.csv", "toy_summary.json"};
  manifest.write(out_dir);

  std::printf("%s", ag_toy_summary_json(res));
  const bool converged = ag_toy_converged(res) != 0;
  ag_toy_result_free(res);
  if (expect_converge && !converged) {
    std::fprintf(stderr, "expected convergence but the run diverged\n");
    return 1;
  }
  return 0;
}

int cmd_search(const std::string& config_path,
               const std::vector<std::string>& sets,
               const std::string& estimator, const std::string& eta,
               const std::string& epochs, const std::string& seed,
               bool do_retrain, const std::string& out_dir) {
  ag_search_config* cfg = nullptr;
  ag_status st = ag_search_config_load(config_path.c_str(), &cfg);
  if (st != AG_OK) return fail(st);

  auto apply = [&](const std::string& key, const std::string& value) {
    const ag_status s = ag_search_config_set(cfg, key.c_str(), value.c_str());
    if (s != AG_OK) {
      std::fprintf(stderr, "error (%s): %s\n", ag_status_name(s),
                   ag_last_error());
      return false;
    }
    return true;
  };
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "--set expects key=value, got '%s'\n", kv.c_str());
      ag_search_config_free(cfg);
      return 2;
    }
    if (!apply(kv.substr(0, eq), kv.substr(eq + 1))) {
      ag_search_config_free(cfg);
      return 2;
    }
  }
  if (!estimator.empty() && !apply("estimator", estimator)) {
    ag_search_config_free(cfg);
    return 2;
  }
  if (!eta.empty() && !apply("eta", eta)) {
    ag_search_config_free(cfg);
    return 2;
  }
  if (!epochs.empty() && !apply("epochs", epochs)) {
    ag_search_config_free(cfg);
    return 2;
  }
  if (!seed.empty() && !apply("seed", seed)) {
    ag_search_config_free(cfg);
    return 2;
  }

  ag_search_result* res = nullptr;
  st = ag_search_run(cfg, &res);
  if (st != AG_OK) {
    ag_search_config_free(cfg);
    return fail(st);
  }

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  ManifestWriter manifest;
  manifest.command = "search";
  manifest.config = nlohmann::json::parse(ag_search_config_json(cfg));
  manifest.seed = manifest.config.value("seed", 0ULL);

  write_atomic(dir / "trajectory.csv", ag_search_trajectory_csv(res));
  write_atomic(dir / "genotype.json", ag_search_genotype_json(res));
  write_atomic(dir / "search_config.json", ag_search_config_json(cfg));
  manifest.outputs = {"trajectory.csv", "genotype.json",
                      "search_config.json"};

  std::printf("final: val_acc=%.6f skip_ratio=%.6f none_weight=%.6f\n",
              ag_search_final_val_acc(res), ag_search_final_skip_ratio(res),
              ag_search_final_none_weight(res));

  int code = 0;
  if (do_retrain) {
    ag_retrain_report* rep = nullptr;
    st = ag_search_retrain(res, cfg, &rep);
    if (st != AG_OK) {
      code = fail(st);
    } else {
      write_atomic(dir / "retrain.json", ag_retrain_json(rep));
      manifest.outputs.push_back("retrain.json");
      std::printf("retrain: accuracy=%.6f\n", ag_retrain_accuracy(rep));
      ag_retrain_report_free(rep);
    }
  }
  manifest.write(out_dir);
  ag_search_result_free(res);
  ag_search_config_free(cfg);
  return code;
}

int cmd_oracle_check(const ag_oracle_options& opt, const std::string& out_dir,
                     bool have_out) {
  ag_oracle_report* rep = nullptr;
  const ag_status st = ag_oracle_check(&opt, &rep);
  if (st != AG_OK) return fail(st);
  std::printf("%s", ag_oracle_text(rep));
  std::printf("max_cross_error=%.3e min_commuting_ip=%.3e "
              "general_nonneg_fraction=%.3f singular_skipped=%ld\n",
              ag_oracle_max_cross_error(rep), ag_oracle_min_commuting_ip(rep),
              ag_oracle_general_nonneg_fraction(rep),
              ag_oracle_singular_skipped(rep));
  const bool passed = ag_oracle_passed(rep) != 0;
  if (have_out) {
    std::filesystem::create_directories(out_dir);
    write_atomic(std::filesystem::path(out_dir) / "oracle_report.txt",
                 ag_oracle_text(rep));
  }
  ag_oracle_report_free(rep);
  std::printf("oracle-check: %s\n", passed ? "PASS" : "FAIL");
  return passed ? 0 : 1;
}

int cmd_gradcheck(const ag_gradcheck_options& opt) {
  ag_gradcheck_report* rep = nullptr;
  const ag_status st = ag_gradcheck_run(&opt, &rep);
  if (st != AG_OK) return fail(st);
  std::printf("%s", ag_gradcheck_text(rep));
  const bool passed = ag_gradcheck_passed(rep) != 0;
  ag_gradcheck_report_free(rep);
  return passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bi-level architectural-gradient toolkit"};
  app.require_subcommand(1);

  // toy
  auto* toy = app.add_subcommand("toy", "run the scalar two-sample problem");
  ag_toy_options topt;
  ag_toy_options_init(&topt);
  std::string toy_estimator = "amended";
  std::string toy_out = default_out_dir();
  bool expect_converge = false;
  toy->add_option("--estimator", toy_estimator,
                  "first-order|second-order|amended|exact|brute-force");
  toy->add_option("--eta", topt.eta, "amending coefficient");
  toy->add_option("--xi", topt.xi, "second-order identity scale");
  toy->add_option("--delta", topt.delta, "brute-force outer step");
  toy->add_option("--steps", topt.steps, "alpha updates");
  toy->add_option("--alpha-lr", topt.alpha_lr, "alpha learning rate");
  toy->add_option("--init", topt.alpha_init, "initial alpha");
  toy->add_option("--out", toy_out, "output directory");
  toy->add_flag("--expect-converge", expect_converge,
                "exit 1 unless the run converges");

  // search
  auto* search = app.add_subcommand("search", "bi-level super-network search");
  std::string config_path;
  std::vector<std::string> sets;
  std::string ov_estimator, ov_eta, ov_epochs, ov_seed;
  std::string search_out = default_out_dir();
  bool do_retrain = false;
  search->add_option("--config", config_path, "run configuration file")
      ->required();
  search->add_option("--set", sets, "override: key=value (repeatable)");
  search->add_option("--estimator", ov_estimator, "estimator override");
  search->add_option("--eta", ov_eta, "amending coefficient override");
  search->add_option("--epochs", ov_epochs, "epoch count override");
  search->add_option("--seed", ov_seed, "seed override");
  search->add_flag("--retrain", do_retrain,
                   "re-train the discretized genotype afterwards");
  search->add_option("--out", search_out, "output directory");

  // oracle-check
  auto* oracle = app.add_subcommand("oracle-check",
                                    "cross-validate hypergradient oracles");
  ag_oracle_options oopt;
  ag_oracle_options_init(&oopt);
  std::string oracle_out;
  oracle->add_option("--instances", oopt.instances, "cross-oracle instances");
  oracle->add_option("--dim-omega", oopt.dim_omega, "inner dimension (<=64)");
  oracle->add_option("--dim-alpha", oopt.dim_alpha, "outer dimension (<=64)");
  oracle->add_option("--eta", oopt.eta, "amending coefficient");
  oracle->add_option("--seed", oopt.seed, "base seed");
  oracle->add_option("--commuting", oopt.commuting_instances,
                     "commuting/isotropic inner-product instances");
  oracle->add_option("--general", oopt.general_instances,
                     "general instances (reported only)");
  oracle->add_option("--condition", oopt.condition_target,
                     "Hessian condition-number target");
  oracle->add_option("--out", oracle_out, "optional report directory");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference gradient validation");
  ag_gradcheck_options gopt;
  ag_gradcheck_options_init(&gopt);
  gc->add_option("--seeds", gopt.seeds, "random draws per target");
  gc->add_option("--tolerance", gopt.tolerance, "general tolerance");
  gc->add_option("--quad-tolerance", gopt.quad_tolerance,
                 "tolerance for polynomial compositions");
#ifdef AG_ENABLE_FAULT_INJECTION
  bool inject = false;
  gc->add_flag("--inject-fault", inject,
               "add a known-bad gradient target (harness self-test)");
#endif

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (toy->parsed()) {
      topt.estimator = toy_estimator.c_str();
      return cmd_toy(topt, toy_out, expect_converge);
    }
    if (search->parsed()) {
      return cmd_search(config_path, sets, ov_estimator, ov_eta, ov_epochs,
                        ov_seed, do_retrain, search_out);
    }
    if (oracle->parsed()) {
      return cmd_oracle_check(oopt, oracle_out, !oracle_out.empty());
    }
    if (gc->parsed()) {
#ifdef AG_ENABLE_FAULT_INJECTION
      gopt.inject_fault = inject ? 1 : 0;
#endif
      return cmd_gradcheck(gopt);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
