#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "archgrad/dataset.hpp"
#include "archgrad/estimators.hpp"

namespace ag {

/// The omega-training regimen. Under hyper-parameter consistency the search
/// and the re-training stages share one of these verbatim.
struct TrainingConfig {
  std::size_t epochs = 50;
  std::size_t steps_per_epoch = 1;
  double omega_lr = 0.05;
  bool operator==(const TrainingConfig&) const = default;
};

std::string training_config_json(const TrainingConfig& tc);

enum class AlphaOptimizerKind { Sgd, Adam };

struct SearchConfig {
  EstimatorKind estimator = EstimatorKind::amended(0.1);
  std::size_t epochs = 50;
  std::size_t inner_steps_per_epoch = 1;
  double omega_lr = 0.05;
  double alpha_lr = 0.0003;
  AlphaOptimizerKind alpha_optimizer = AlphaOptimizerKind::Adam;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double alpha_weight_decay = 0.001;
  std::uint64_t seed = 1;
  DatasetSpec dataset;
  SuperNetConfig net;
  bool consistency = true;
  bool two_stage = false;
  std::size_t log_every = 1;
  // used for re-training only when consistency is off
  TrainingConfig retrain_override;

  TrainingConfig training() const {
    return {epochs, inner_steps_per_epoch, omega_lr};
  }
  TrainingConfig retrain_training() const {
    return consistency ? training() : retrain_override;
  }
  void validate() const;
};

/// Key-value run configuration files (one `key = value` per line, `#`
/// comments). Unknown keys are rejected.
SearchConfig parse_search_config(const std::string& text);
SearchConfig load_search_config(const std::string& path);
void apply_config_override(SearchConfig& config, const std::string& key,
                           const std::string& value);
std::string search_config_json(const SearchConfig& config);

struct TrajectoryRow {
  std::size_t epoch = 0;
  double none_weight = 0.0;
  double skip_ratio = 0.0;
  double val_acc = 0.0;
  double g1_norm = 0.0;
  double g2_norm = 0.0;
  std::uint64_t alpha_hash = 0;
};

struct Trajectory {
  std::vector<TrajectoryRow> rows;
  /// Header: epoch,none_weight,skip_ratio,val_acc,g1_norm,g2_norm
  std::string to_csv() const;
};

// ---- scalar toy problem ----

struct ToyRunConfig {
  EstimatorKind estimator = EstimatorKind::amended(0.5);
  std::size_t steps = 400;
  double alpha_lr = 0.05;
  double alpha_init = 0.5;
};

struct ToyTrajectoryRow {
  std::size_t step = 0;
  double omega = 0.0;
  double alpha = 0.0;
  double val_loss = 0.0;
};

struct ToyRunResult {
  std::vector<ToyTrajectoryRow> rows;
  bool converged = false;     // |alpha| < 1e-3 at the end
  long diverged_step = -1;    // first step with |alpha| > 1e12, or -1
  double final_alpha = 0.0;
  std::string to_csv() const;
  std::string summary_json() const;
};

/// One step = exact inner solve (omega <- alpha) followed by one alpha
/// update with the chosen estimator. The instance's amended threshold is
/// eta = 0.125: the total estimate (16 eta - 2) alpha only points along the
/// true hypergradient 2 alpha above it, which is why the default eta here
/// is 0.5 and small eta (0.01) diverges like first-order.
ToyRunResult toy_run(const ToyRunConfig& config);

// ---- super-network search ----

struct SearchResult {
  ArchParams arch;
  Genotype genotype;
  Trajectory trajectory;
  std::vector<double> omega;
  SuperNetConfig net;  // normalized; two-stage runs report the pruned edges
  double final_val_acc = 0.0;
  double final_none_weight = 0.0;
  double final_skip_ratio = 0.0;
  // stage-1 selection per node, present for two-stage runs
  std::vector<std::pair<std::size_t, std::size_t>> selected_combinations;
};

/// Alternating bi-level loop: inner_steps_per_epoch omega steps on the
/// train half, then one alpha update on the validation half. Throws
/// Diverged when a loss exceeds 1e12 or turns non-finite.
SearchResult bilevel_search(const SearchConfig& config);

struct EdgeSearchResult {
  // chosen (i1, i2) per computed node; nodes with fewer than two candidate
  // inputs keep their edges and report no choice
  std::vector<std::optional<std::pair<std::size_t, std::size_t>>> selected;
  SuperNetConfig pruned;  // beta disabled, edges restricted to the selection
  Trajectory trajectory;
};

/// Stage 1 of the two-stage search: operators fixed to an equal-weight
/// mixture, beta optimized, argmax combination kept per node. Requires
/// shared cell parameters.
EdgeSearchResult edge_search_stage(const SearchConfig& config);

/// Full run: optional edge-search stage (restarting from scratch on the
/// preserved edges), then operator search.
SearchResult run_search(const SearchConfig& config);

// ---- discretized re-training ----

struct RetrainResult {
  double accuracy = 0.0;           // on a held-out test set
  std::vector<double> loss_curve;  // train loss per epoch
};

/// Trains the discrete sub-network from scratch on the full search dataset
/// and reports accuracy on a fresh test set of the same size generated from
/// dataset seed + 1.
RetrainResult retrain(const Genotype& genotype, const SuperNetConfig& net,
                      const TrainingConfig& tc, const DatasetSpec& dataset,
                      std::uint64_t seed);

std::uint64_t fnv1a_hash(const void* data, std::size_t size);

}  // namespace ag
