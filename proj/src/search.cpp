#include "archgrad/search.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "archgrad/jsonio.hpp"
#include "archgrad/status.hpp"

namespace ag {

std::uint64_t fnv1a_hash(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

double l2_norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

void check_loss(double loss, std::size_t epoch) {
  if (!std::isfinite(loss) || loss > 1e12) {
    throw Error(Status::Diverged,
                "loss " + std::to_string(loss) + " at epoch " +
                    std::to_string(epoch));
  }
}

const char* optimizer_name(AlphaOptimizerKind k) {
  return k == AlphaOptimizerKind::Adam ? "adam" : "sgd";
}

}  // namespace

void SearchConfig::validate() const {
  estimator.validate();
  if (!(omega_lr > 0.0) || !(alpha_lr > 0.0)) {
    throw Error(Status::Config, "learning rates must be positive");
  }
  if (inner_steps_per_epoch == 0 || log_every == 0) {
    throw Error(Status::Config,
                "inner_steps_per_epoch and log_every must be positive");
  }
  net.normalized();  // throws on bad network configuration
}

std::string training_config_json(const TrainingConfig& tc) {
  nlohmann::json j{{"epochs", tc.epochs},
                   {"steps_per_epoch", tc.steps_per_epoch},
                   {"omega_lr", tc.omega_lr}};
  return canonical_json(j);
}

namespace {

nlohmann::json estimator_json(const EstimatorKind& kind) {
  return {{"type", kind.name()},
          {"eta", kind.eta},
          {"xi", kind.xi},
          {"delta", kind.delta}};
}

nlohmann::json net_json(const SuperNetConfig& raw) {
  const auto net = raw.normalized();
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : net.edges) {
    edges.push_back({e.from, e.to});
  }
  nlohmann::json feeds = nlohmann::json::array();
  for (const auto& f : net.input_feeds) {
    feeds.push_back({{"begin", f.begin}, {"end", f.end}, {"stem", f.stem}});
  }
  nlohmann::json ops = nlohmann::json::array();
  for (auto op : net.operator_set) ops.push_back(operator_kind_name(op));
  return {{"num_cells", net.num_cells},
          {"nodes_per_cell", net.nodes_per_cell},
          {"feature_dim", net.feature_dim},
          {"num_classes", net.num_classes},
          {"input_dim", net.input_dim},
          {"input_feeds", feeds},
          {"edges", edges},
          {"share_cell_params", net.share_cell_params},
          {"operator_set", ops},
          {"inputs_per_node", net.inputs_per_node},
          {"prune_edges", net.prune_edges},
          {"use_beta", net.use_beta}};
}

}  // namespace

std::string search_config_json(const SearchConfig& config) {
  nlohmann::json j{
      {"estimator", estimator_json(config.estimator)},
      {"epochs", config.epochs},
      {"inner_steps_per_epoch", config.inner_steps_per_epoch},
      {"omega_lr", config.omega_lr},
      {"alpha_lr", config.alpha_lr},
      {"alpha_optimizer", optimizer_name(config.alpha_optimizer)},
      {"adam_beta1", config.adam_beta1},
      {"adam_beta2", config.adam_beta2},
      {"alpha_weight_decay", config.alpha_weight_decay},
      {"seed", config.seed},
      {"dataset",
       {{"kind", dataset_kind_name(config.dataset.kind)},
        {"seed", config.dataset.seed},
        {"size", config.dataset.size},
        {"noise_dims", config.dataset.noise_dims}}},
      {"net", net_json(config.net)},
      {"consistency", config.consistency},
      {"two_stage", config.two_stage},
      {"log_every", config.log_every},
      {"training", nlohmann::json::parse(
                       training_config_json(config.training()))},
      {"retrain_training",
       nlohmann::json::parse(
           training_config_json(config.retrain_training()))},
  };
  return canonical_json(j);
}

namespace {

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(Status::Config, "expected a boolean, got '" + v + "'");
}

double parse_real(const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(Status::Config, "expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(Status::Config, "expected an integer, got '" + v + "'");
  }
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_override(SearchConfig& config, const std::string& key,
                           const std::string& value) {
  if (key == "estimator") {
    config.estimator.type = EstimatorKind::type_from_name(value);
  } else if (key == "eta") {
    config.estimator.eta = parse_real(value);
  } else if (key == "xi") {
    config.estimator.xi = parse_real(value);
  } else if (key == "delta") {
    config.estimator.delta = parse_real(value);
  } else if (key == "epochs") {
    config.epochs = parse_u64(value);
  } else if (key == "inner_steps_per_epoch") {
    config.inner_steps_per_epoch = parse_u64(value);
  } else if (key == "omega_lr") {
    config.omega_lr = parse_real(value);
  } else if (key == "alpha_lr") {
    config.alpha_lr = parse_real(value);
  } else if (key == "alpha_optimizer") {
    if (value == "adam") {
      config.alpha_optimizer = AlphaOptimizerKind::Adam;
    } else if (value == "sgd") {
      config.alpha_optimizer = AlphaOptimizerKind::Sgd;
    } else {
      throw Error(Status::Config, "unknown alpha optimizer: " + value);
    }
  } else if (key == "adam_beta1") {
    config.adam_beta1 = parse_real(value);
  } else if (key == "adam_beta2") {
    config.adam_beta2 = parse_real(value);
  } else if (key == "alpha_weight_decay") {
    config.alpha_weight_decay = parse_real(value);
  } else if (key == "seed") {
    config.seed = parse_u64(value);
  } else if (key == "dataset") {
    config.dataset.kind = dataset_kind_from_name(value);
  } else if (key == "dataset_seed") {
    config.dataset.seed = parse_u64(value);
  } else if (key == "dataset_size") {
    config.dataset.size = parse_u64(value);
  } else if (key == "dataset_noise_dims") {
    config.dataset.noise_dims = parse_u64(value);
  } else if (key == "num_cells") {
    config.net.num_cells = parse_u64(value);
  } else if (key == "nodes_per_cell") {
    config.net.nodes_per_cell = parse_u64(value);
  } else if (key == "feature_dim") {
    config.net.feature_dim = parse_u64(value);
  } else if (key == "num_classes") {
    config.net.num_classes = parse_u64(value);
  } else if (key == "share_cell_params") {
    config.net.share_cell_params = parse_bool(value);
  } else if (key == "inputs_per_node") {
    config.net.inputs_per_node = parse_u64(value);
  } else if (key == "prune_edges") {
    config.net.prune_edges = parse_bool(value);
  } else if (key == "edges") {
    if (value == "full") {
      config.net.edges.clear();  // normalized() fills the full DAG
    } else if (value == "chain") {
      config.net.edges = SuperNetConfig::chain_edges(
          config.net.num_input_nodes(), config.net.nodes_per_cell);
    } else {
      throw Error(Status::Config, "edges must be 'full' or 'chain'");
    }
  } else if (key == "operators") {
    std::vector<OperatorKind> ops;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      ops.push_back(operator_kind_from_name(trim(item)));
    }
    config.net.operator_set = ops;
  } else if (key == "two_stage") {
    config.two_stage = parse_bool(value);
  } else if (key == "consistency") {
    config.consistency = parse_bool(value);
  } else if (key == "log_every") {
    config.log_every = parse_u64(value);
  } else if (key == "retrain_epochs") {
    config.retrain_override.epochs = parse_u64(value);
  } else if (key == "retrain_steps_per_epoch") {
    config.retrain_override.steps_per_epoch = parse_u64(value);
  } else if (key == "retrain_omega_lr") {
    config.retrain_override.omega_lr = parse_real(value);
  } else {
    throw Error(Status::Config, "unknown configuration key: " + key);
  }
}

SearchConfig parse_search_config(const std::string& text) {
  SearchConfig config;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  // edge presets depend on node counts, so apply structure keys first and
  // the edge key in a second pass
  std::vector<std::pair<std::string, std::string>> pairs;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw Error(Status::Config,
                  "line " + std::to_string(lineno) + ": expected key = value");
    }
    pairs.emplace_back(trim(stripped.substr(0, eq)),
                       trim(stripped.substr(eq + 1)));
  }
  for (const auto& [k, v] : pairs) {
    if (k != "edges") apply_config_override(config, k, v);
  }
  for (const auto& [k, v] : pairs) {
    if (k == "edges") apply_config_override(config, k, v);
  }
  config.validate();
  return config;
}

SearchConfig load_search_config(const std::string& path) {
  return parse_search_config(read_file(path));
}

std::string Trajectory::to_csv() const {
  std::string out = "epoch,none_weight,skip_ratio,val_acc,g1_norm,g2_norm\n";
  for (const auto& row : rows) {
    out += std::to_string(row.epoch);
    out += ',';
    out += format_double(row.none_weight);
    out += ',';
    out += format_double(row.skip_ratio);
    out += ',';
    out += format_double(row.val_acc);
    out += ',';
    out += format_double(row.g1_norm);
    out += ',';
    out += format_double(row.g2_norm);
    out += '\n';
  }
  return out;
}

std::string ToyRunResult::to_csv() const {
  std::string out = "step,omega,alpha,val_loss\n";
  for (const auto& row : rows) {
    out += std::to_string(row.step);
    out += ',';
    out += format_double(row.omega);
    out += ',';
    out += format_double(row.alpha);
    out += ',';
    out += format_double(row.val_loss);
    out += '\n';
  }
  return out;
}

std::string ToyRunResult::summary_json() const {
  nlohmann::json j{{"converged", converged},
                   {"diverged_step", diverged_step},
                   {"final_alpha", final_alpha},
                   {"steps", rows.empty() ? 0 : rows.back().step}};
  return canonical_json(j);
}

ToyRunResult toy_run(const ToyRunConfig& config) {
  config.estimator.validate();
  if (config.steps == 0) {
    throw Error(Status::InvalidArgument, "toy run needs at least one step");
  }
  if (!(config.alpha_lr > 0.0)) {
    throw Error(Status::InvalidArgument, "alpha_lr must be positive");
  }
  ToyBilevelObjective toy;
  ToyRunResult result;
  double alpha = config.alpha_init;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const double omega = alpha;  // exact inner solve: w*(a) = a
    const double val_loss =
        toy.val_eval({omega}, {alpha}, {false, false}).loss;
    result.rows.push_back({step, omega, alpha, val_loss});
    if (std::fabs(alpha) > 1e12) {
      result.diverged_step = static_cast<long>(step);
      break;
    }
    BilevelState state{&toy, {omega}, {alpha}};
    const auto est = estimate_arch_gradient(config.estimator, state);
    alpha -= config.alpha_lr * est[0];
  }
  result.final_alpha = alpha;
  result.converged =
      result.diverged_step < 0 && std::fabs(alpha) < 1e-3;
  return result;
}

namespace {

struct AlphaOptimizer {
  const SearchConfig& cfg;
  std::vector<double> m, v;
  double beta1_t = 1.0, beta2_t = 1.0;

  explicit AlphaOptimizer(const SearchConfig& c, std::size_t dim)
      : cfg(c), m(dim, 0.0), v(dim, 0.0) {}

  void step(std::vector<double>& alpha, const std::vector<double>& grad) {
    if (cfg.alpha_optimizer == AlphaOptimizerKind::Sgd) {
      for (std::size_t i = 0; i < alpha.size(); ++i) {
        alpha[i] -= cfg.alpha_lr *
                    (grad[i] + cfg.alpha_weight_decay * alpha[i]);
      }
      return;
    }
    beta1_t *= cfg.adam_beta1;
    beta2_t *= cfg.adam_beta2;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      const double g = grad[i] + cfg.alpha_weight_decay * alpha[i];
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g;
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g;
      const double mhat = m[i] / (1.0 - beta1_t);
      const double vhat = v[i] / (1.0 - beta2_t);
      alpha[i] -= cfg.alpha_lr * mhat / (std::sqrt(vhat) + 1e-8);
    }
  }
};

struct LoopOutput {
  std::vector<double> omega;
  std::vector<double> alpha;
  Trajectory trajectory;
};

/// The alternating loop shared by operator search and edge search.
LoopOutput run_bilevel_loop(const SearchConfig& cfg,
                            const SupernetBilevelObjective& obj, Rng& rng) {
  LoopOutput out;
  out.omega = init_omega(obj.layout(), rng);
  out.alpha.assign(obj.dim_alpha(), 0.0);
  AlphaOptimizer opt(cfg, obj.dim_alpha());

  auto log_row = [&](std::size_t epoch, double g1n, double g2n) {
    const ArchParams arch = obj.materialize_arch(out.alpha);
    const auto metrics = degeneration_metrics(arch, obj.config());
    TrajectoryRow row;
    row.epoch = epoch;
    row.none_weight = metrics.mean_none_weight;
    row.skip_ratio = metrics.skip_ratio;
    row.val_acc = obj.val_accuracy(out.omega, out.alpha);
    row.g1_norm = g1n;
    row.g2_norm = g2n;
    row.alpha_hash = fnv1a_hash(out.alpha.data(),
                                out.alpha.size() * sizeof(double));
    out.trajectory.rows.push_back(row);
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t step = 0; step < cfg.inner_steps_per_epoch; ++step) {
      auto eval = obj.train_eval(out.omega, out.alpha, {true, false});
      check_loss(eval.loss, epoch);
      for (std::size_t i = 0; i < out.omega.size(); ++i) {
        out.omega[i] -= cfg.omega_lr * eval.grad_omega[i];
      }
    }

    check_loss(obj.val_eval(out.omega, out.alpha, {false, false}).loss,
               epoch);
    BilevelState state{&obj, out.omega, out.alpha};
    const auto direct = g1(state);
    const auto est = estimate_arch_gradient(cfg.estimator, state);
    double g2n = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
      const double d = est[i] - direct[i];
      g2n += d * d;
    }
    opt.step(out.alpha, est);

    if (epoch == 1 || epoch == cfg.epochs || epoch % cfg.log_every == 0) {
      log_row(epoch, l2_norm(direct), std::sqrt(g2n));
    }
  }
  if (cfg.epochs == 0) log_row(0, 0.0, 0.0);
  return out;
}

}  // namespace

SearchResult bilevel_search(const SearchConfig& config) {
  config.validate();
  const auto net = config.net.normalized();
  const auto data = generate_dataset(config.dataset);
  const std::size_t half = config.dataset.size / 2;
  Batch train = dataset_slice(data, 0, half);
  Batch val = dataset_slice(data, half, config.dataset.size);

  SupernetBilevelObjective obj(net, ArchParams::zeros(net), std::move(train),
                               std::move(val), ArchMode::OperatorSearch);
  Rng rng(config.seed);
  auto loop = run_bilevel_loop(config, obj, rng);

  SearchResult result;
  result.net = net;
  result.arch = obj.materialize_arch(loop.alpha);
  result.genotype = discretize(result.arch, net);
  result.trajectory = std::move(loop.trajectory);
  result.omega = std::move(loop.omega);
  result.final_val_acc = result.trajectory.rows.empty()
                             ? 0.0
                             : result.trajectory.rows.back().val_acc;
  const auto metrics = degeneration_metrics(result.arch, net);
  result.final_none_weight = metrics.mean_none_weight;
  result.final_skip_ratio = metrics.skip_ratio;
  return result;
}

EdgeSearchResult edge_search_stage(const SearchConfig& config) {
  config.validate();
  SuperNetConfig net = config.net;
  net.use_beta = true;
  const auto norm = net.normalized();
  if (!norm.share_cell_params) {
    throw Error(Status::Config,
                "edge search requires shared cell parameters (one beta per "
                "edge set)");
  }
  const auto data = generate_dataset(config.dataset);
  const std::size_t half = config.dataset.size / 2;
  Batch train = dataset_slice(data, 0, half);
  Batch val = dataset_slice(data, half, config.dataset.size);

  // operators stay an equal-weight mixture: alpha logits fixed at zero
  SupernetBilevelObjective obj(norm, ArchParams::zeros(norm),
                               std::move(train), std::move(val),
                               ArchMode::EdgeSearch);
  Rng rng(config.seed);
  auto loop = run_bilevel_loop(config, obj, rng);

  ArchParams arch = obj.materialize_arch(loop.alpha);
  EdgeSearchResult result;
  result.trajectory = std::move(loop.trajectory);

  const std::size_t k = norm.num_input_nodes();
  std::vector<Edge> pruned_edges;
  for (std::size_t n = 0; n < norm.nodes_per_cell; ++n) {
    const std::size_t j = k + n;
    const auto combos = norm.combinations_of(j);
    const auto in_edges = norm.edges_into(j);
    if (combos.empty() || in_edges.size() < 2) {
      result.selected.push_back(std::nullopt);
      for (const auto& e : in_edges) pruned_edges.push_back(e);
      continue;
    }
    const auto& logits = arch.beta[0][n];
    std::size_t best = 0;  // ties keep the lexicographically lowest pair
    for (std::size_t i = 1; i < combos.size(); ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    result.selected.push_back(combos[best]);
    pruned_edges.push_back({combos[best].first, j});
    pruned_edges.push_back({combos[best].second, j});
  }

  result.pruned = config.net;
  result.pruned.use_beta = false;
  result.pruned.edges = std::move(pruned_edges);
  result.pruned = result.pruned.normalized();
  return result;
}

SearchResult run_search(const SearchConfig& config) {
  if (!config.two_stage) return bilevel_search(config);
  auto stage1 = edge_search_stage(config);
  SearchConfig stage2 = config;
  stage2.net = stage1.pruned;
  stage2.two_stage = false;
  // restart from scratch on the preserved edges
  SearchResult result = bilevel_search(stage2);
  for (const auto& sel : stage1.selected) {
    if (sel) result.selected_combinations.push_back(*sel);
  }
  return result;
}

RetrainResult retrain(const Genotype& genotype, const SuperNetConfig& net,
                      const TrainingConfig& tc, const DatasetSpec& dataset,
                      std::uint64_t seed) {
  const auto norm = net.normalized();
  const auto layout = subnet_omega_layout(norm, genotype);
  const auto train_data = generate_dataset(dataset);
  DatasetSpec test_spec = dataset;
  test_spec.seed = dataset.seed + 1;
  const auto test_data = generate_dataset(test_spec);
  const Batch train = dataset_batch(train_data);
  const Batch test = dataset_batch(test_data);

  Rng rng(seed);
  auto omega = init_omega(layout, rng);

  RetrainResult result;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    double first_loss = 0.0;
    for (std::size_t step = 0; step < tc.steps_per_epoch; ++step) {
      Tape tape;
      auto fwd = subnet_forward(tape, norm, genotype, omega, layout, train);
      const double loss = tape.value(fwd.loss)[0];
      check_loss(loss, epoch);
      if (step == 0) first_loss = loss;
      auto grads = tape.backward(fwd.loss, {"omega"}).flat("omega");
      for (std::size_t i = 0; i < omega.size(); ++i) {
        omega[i] -= tc.omega_lr * grads[i];
      }
    }
    result.loss_curve.push_back(first_loss);
  }

  Tape tape;
  auto fwd = subnet_forward(tape, norm, genotype, omega, layout, test);
  result.accuracy = accuracy_from_logits(tape.value(fwd.logits), test.labels);
  return result;
}

}  // namespace ag
