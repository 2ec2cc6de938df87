#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "archgrad/search.hpp"
#include "archgrad/status.hpp"

using namespace ag;

namespace {

SearchConfig small_config() {
  SearchConfig cfg;
  cfg.net.nodes_per_cell = 2;
  cfg.net.feature_dim = 3;
  cfg.dataset.size = 32;
  cfg.epochs = 5;
  cfg.inner_steps_per_epoch = 2;
  cfg.alpha_lr = 0.01;
  cfg.estimator = EstimatorKind::amended(0.5);
  return cfg;
}

}  // namespace

TEST_CASE("toy run with first-order estimate diverges geometrically") {
  ToyRunConfig cfg;
  cfg.estimator = EstimatorKind::first_order();
  auto res = toy_run(cfg);
  CHECK_FALSE(res.converged);
  CHECK(res.diverged_step > 0);
  // alpha multiplies by 1 + 2*lr each step
  REQUIRE(res.rows.size() > 3);
  for (std::size_t t = 1; t < 4; ++t) {
    const double ratio = res.rows[t].alpha / res.rows[t - 1].alpha;
    CHECK(std::fabs(ratio - (1.0 + 2.0 * cfg.alpha_lr)) < 1e-9);
  }
}

TEST_CASE("toy run with the default amended coefficient converges") {
  ToyRunConfig cfg;  // amended eta = 0.5
  auto res = toy_run(cfg);
  CHECK(res.converged);
  CHECK(res.diverged_step == -1);
  CHECK(std::fabs(res.final_alpha) < 1e-3);
  // total estimate (16*0.5 - 2) a = 6a; contraction factor 1 - 6*lr = 0.7
  const double ratio = res.rows[1].alpha / res.rows[0].alpha;
  CHECK(std::fabs(ratio - 0.7) < 1e-9);
}

TEST_CASE("toy run with a small amending coefficient diverges") {
  ToyRunConfig cfg;
  cfg.estimator = EstimatorKind::amended(0.01);
  auto res = toy_run(cfg);
  CHECK_FALSE(res.converged);
  CHECK(res.diverged_step > 0);
}

TEST_CASE("toy run with the exact estimator contracts at 1 - 2 lr") {
  ToyRunConfig cfg;
  cfg.estimator = EstimatorKind::exact_implicit();
  cfg.steps = 80;
  auto res = toy_run(cfg);
  CHECK(res.converged);
  const double expect = 1.0 - 2.0 * cfg.alpha_lr;
  for (std::size_t t = 1; t < 10; ++t) {
    const double ratio = res.rows[t].alpha / res.rows[t - 1].alpha;
    CHECK(std::fabs(ratio - expect) < 1e-6);
  }
  // monotone contraction
  for (std::size_t t = 1; t < res.rows.size(); ++t) {
    CHECK(std::fabs(res.rows[t].alpha) < std::fabs(res.rows[t - 1].alpha));
  }
}

TEST_CASE("toy csv and summary formats") {
  ToyRunConfig cfg;
  auto res = toy_run(cfg);
  const auto csv = res.to_csv();
  CHECK(csv.rfind("step,omega,alpha,val_loss\n", 0) == 0);
  CHECK(res.summary_json().find("\"converged\":true") != std::string::npos);
  CHECK(res.summary_json().find("\"final_alpha\":") != std::string::npos);

  auto res2 = toy_run(cfg);
  CHECK(res.to_csv() == res2.to_csv());
}

TEST_CASE("bilevel search runs and logs sane metrics") {
  auto cfg = small_config();
  auto result = bilevel_search(cfg);
  REQUIRE(!result.trajectory.rows.empty());
  std::size_t prev = 0;
  for (const auto& row : result.trajectory.rows) {
    CHECK(row.epoch > prev);
    prev = row.epoch;
    CHECK(row.none_weight >= 0.0);
    CHECK(row.none_weight <= 1.0);
    CHECK(row.skip_ratio >= 0.0);
    CHECK(row.skip_ratio <= 1.0);
    CHECK(std::isfinite(row.val_acc));
    CHECK(std::isfinite(row.g1_norm));
    CHECK(std::isfinite(row.g2_norm));
  }
  CHECK(result.genotype.edge_count() > 0);
}

TEST_CASE("search is deterministic byte for byte") {
  auto cfg = small_config();
  auto a = bilevel_search(cfg);
  auto b = bilevel_search(cfg);
  CHECK(a.trajectory.to_csv() == b.trajectory.to_csv());
  CHECK(a.genotype.to_json() == b.genotype.to_json());
  CHECK(a.omega == b.omega);
}

TEST_CASE("zero epochs discretizes the initialization") {
  auto cfg = small_config();
  cfg.epochs = 0;
  auto result = bilevel_search(cfg);
  const auto net = cfg.net.normalized();
  CHECK(result.genotype == discretize(ArchParams::zeros(net), net));
}

TEST_CASE("consistency shares one training config") {
  auto cfg = small_config();
  cfg.consistency = true;
  CHECK(training_config_json(cfg.training()) ==
        training_config_json(cfg.retrain_training()));
  cfg.consistency = false;
  cfg.retrain_override = {123, 4, 0.9};
  CHECK(training_config_json(cfg.training()) !=
        training_config_json(cfg.retrain_training()));
}

TEST_CASE("edge search with a single combination is a no-op") {
  SearchConfig cfg;
  cfg.net.nodes_per_cell = 1;
  cfg.net.feature_dim = 2;
  cfg.net.input_dim = 4;
  cfg.net.input_feeds = {{0, 2, true}, {2, 4, true}};
  cfg.dataset.size = 16;
  cfg.dataset.noise_dims = 2;
  cfg.epochs = 2;
  auto res = edge_search_stage(cfg);
  REQUIRE(res.selected.size() == 1);
  REQUIRE(res.selected[0].has_value());
  CHECK(res.selected[0]->first == 0);
  CHECK(res.selected[0]->second == 1);
}

TEST_CASE("edge search beta ties pick the lowest pair") {
  SearchConfig cfg;
  cfg.net.nodes_per_cell = 3;
  cfg.net.feature_dim = 3;
  cfg.dataset.size = 16;
  cfg.epochs = 0;  // beta stays at zeros: every combination ties
  auto res = edge_search_stage(cfg);
  REQUIRE(res.selected.size() == 3);
  // node 1 has one candidate (no combinations); nodes 2 and 3 tie
  CHECK_FALSE(res.selected[0].has_value());
  REQUIRE(res.selected[1].has_value());
  CHECK(res.selected[1]->first == 0);
  CHECK(res.selected[1]->second == 1);
  REQUIRE(res.selected[2].has_value());
  CHECK(res.selected[2]->first == 0);
  CHECK(res.selected[2]->second == 1);
}

TEST_CASE("edge search selection is deterministic across runs") {
  SearchConfig cfg;
  cfg.net.nodes_per_cell = 3;
  cfg.net.feature_dim = 3;
  cfg.dataset.size = 32;
  cfg.epochs = 4;
  cfg.seed = 7;
  auto a = edge_search_stage(cfg);
  auto b = edge_search_stage(cfg);
  CHECK(a.selected == b.selected);
  CHECK(a.trajectory.to_csv() == b.trajectory.to_csv());
}

TEST_CASE("two-stage search restricts the edge set") {
  SearchConfig cfg = small_config();
  cfg.net.nodes_per_cell = 3;
  cfg.two_stage = true;
  cfg.epochs = 2;
  auto res = run_search(cfg);
  CHECK(res.selected_combinations.size() == 2);  // nodes 2 and 3
  const auto full = SuperNetConfig::full_edges(1, 3).size();
  CHECK(res.net.edges.size() < full);
}

TEST_CASE("retrain is deterministic and all-skip has no cell parameters") {
  SuperNetConfig net;
  net.nodes_per_cell = 2;
  net.feature_dim = 4;
  net = net.normalized();
  auto arch = ArchParams::zeros(net);
  auto genotype = discretize(arch, net);  // equal logits: all skip
  for (const auto& group : genotype.nodes) {
    for (const auto& node : group) {
      for (const auto& e : node) CHECK(e.op == OperatorKind::SkipConnect);
    }
  }
  const auto layout = subnet_omega_layout(net, genotype);
  // stem W/b + head W/b only
  CHECK(layout.entries.size() == 4);

  TrainingConfig tc{50, 1, 0.3};
  DatasetSpec data{DatasetKind::TwoGaussians, 11, 64};
  auto a = retrain(genotype, net, tc, data, 5);
  auto b = retrain(genotype, net, tc, data, 5);
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.loss_curve.size() == 50);
  CHECK(a.loss_curve.front() > a.loss_curve.back());
}

TEST_CASE("config files parse with overrides and reject unknown keys") {
  const std::string text =
      "# run configuration\n"
      "estimator = amended\n"
      "eta = 0.25\n"
      "epochs = 7\n"
      "nodes_per_cell = 3\n"
      "edges = chain\n"
      "operators = none, skip_connect, non_linear\n"
      "dataset = concentric_rings\n"
      "dataset_size = 64\n"
      "seed = 9\n";
  auto cfg = parse_search_config(text);
  CHECK(cfg.estimator.type == EstimatorType::Amended);
  CHECK(cfg.estimator.eta == 0.25);
  CHECK(cfg.epochs == 7);
  CHECK(cfg.net.nodes_per_cell == 3);
  CHECK(cfg.net.edges.size() == 3);  // chain
  CHECK(cfg.net.operator_set.size() == 3);
  CHECK(cfg.dataset.kind == DatasetKind::ConcentricRings);
  CHECK(cfg.seed == 9);

  CHECK_THROWS_AS((void)parse_search_config("bogus_key = 1\n"), Error);
  CHECK_THROWS_AS((void)parse_search_config("epochs\n"), Error);

  apply_config_override(cfg, "epochs", "11");
  CHECK(cfg.epochs == 11);

  // canonical json reflects the resolved configuration
  const auto j = search_config_json(cfg);
  CHECK(j.find("\"epochs\":11") != std::string::npos);
  CHECK(j.find("\"kind\":\"concentric_rings\"") != std::string::npos);
}
