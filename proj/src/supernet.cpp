#include "archgrad/supernet.hpp"

#include <algorithm>
#include <cmath>

#include "archgrad/jsonio.hpp"
#include "archgrad/pmath.hpp"
#include "archgrad/status.hpp"

namespace ag {

const char* operator_kind_name(OperatorKind k) {
  switch (k) {
    case OperatorKind::None: return "none";
    case OperatorKind::SkipConnect: return "skip_connect";
    case OperatorKind::Linear: return "linear";
    case OperatorKind::NonLinear: return "non_linear";
  }
  return "unknown";
}

OperatorKind operator_kind_from_name(const std::string& name) {
  if (name == "none") return OperatorKind::None;
  if (name == "skip_connect") return OperatorKind::SkipConnect;
  if (name == "linear") return OperatorKind::Linear;
  if (name == "non_linear") return OperatorKind::NonLinear;
  throw Error(Status::InvalidArgument, "unknown operator name " + name);
}

bool operator_is_parametric(OperatorKind k) {
  return k == OperatorKind::Linear || k == OperatorKind::NonLinear;
}

std::size_t SuperNetConfig::num_input_nodes() const {
  return input_feeds.empty() ? 1 : input_feeds.size();
}

std::size_t SuperNetConfig::num_nodes() const {
  return num_input_nodes() + nodes_per_cell;
}

std::vector<Edge> SuperNetConfig::full_edges(std::size_t num_inputs,
                                             std::size_t computed) {
  std::vector<Edge> out;
  for (std::size_t j = num_inputs; j < num_inputs + computed; ++j) {
    for (std::size_t i = 0; i < j; ++i) out.push_back({i, j});
  }
  return out;
}

std::vector<Edge> SuperNetConfig::chain_edges(std::size_t num_inputs,
                                              std::size_t computed) {
  std::vector<Edge> out;
  for (std::size_t j = num_inputs; j < num_inputs + computed; ++j) {
    out.push_back({j - 1, j});
  }
  return out;
}

SuperNetConfig SuperNetConfig::normalized() const {
  SuperNetConfig c = *this;
  if (c.input_feeds.empty()) {
    c.input_feeds.push_back({0, c.input_dim, true});
  }
  if (c.edges.empty()) {
    c.edges = full_edges(c.input_feeds.size(), c.nodes_per_cell);
  }
  std::sort(c.edges.begin(), c.edges.end(), [](const Edge& a, const Edge& b) {
    return a.to != b.to ? a.to < b.to : a.from < b.from;
  });
  std::sort(c.operator_set.begin(), c.operator_set.end());
  c.operator_set.erase(
      std::unique(c.operator_set.begin(), c.operator_set.end()),
      c.operator_set.end());
  c.validate();
  return c;
}

void SuperNetConfig::validate() const {
  if (num_cells == 0 || nodes_per_cell == 0 || feature_dim == 0 ||
      num_classes < 2 || inputs_per_node == 0) {
    throw Error(Status::Config, "super-network dimensions must be positive");
  }
  if (operator_set.empty()) {
    throw Error(Status::Config, "operator set must be nonempty");
  }
  if (input_feeds.size() > 1 && num_cells != 1) {
    throw Error(Status::Config,
                "multiple input feeds are only supported for single-cell "
                "networks");
  }
  for (const auto& f : input_feeds) {
    if (f.begin >= f.end || f.end > input_dim) {
      throw Error(Status::Config, "input feed slice out of range");
    }
    if (!f.stem && f.end - f.begin != feature_dim) {
      throw Error(Status::Config,
                  "raw input feed width must equal feature_dim");
    }
  }
  const std::size_t k = num_input_nodes();
  for (const auto& e : edges) {
    if (e.from >= e.to || e.to < k || e.to >= num_nodes()) {
      throw Error(Status::Config, "edge (" + std::to_string(e.from) + "," +
                                      std::to_string(e.to) + ") out of range");
    }
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] == edges[i - 1]) {
      throw Error(Status::Config, "duplicate edge in edge set");
    }
  }
}

std::vector<Edge> SuperNetConfig::edges_into(std::size_t j) const {
  std::vector<Edge> out;
  for (const auto& e : edges) {
    if (e.to == j) out.push_back(e);
  }
  std::sort(out.begin(), out.end(),
            [](const Edge& a, const Edge& b) { return a.from < b.from; });
  return out;
}

std::vector<std::size_t> SuperNetConfig::candidates_of(std::size_t j) const {
  std::vector<std::size_t> out;
  for (const auto& e : edges_into(j)) out.push_back(e.from);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>>
SuperNetConfig::combinations_of(std::size_t j) const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto cand = candidates_of(j);
  for (std::size_t a = 0; a < cand.size(); ++a) {
    for (std::size_t b = a + 1; b < cand.size(); ++b) {
      out.emplace_back(cand[a], cand[b]);
    }
  }
  return out;
}

std::size_t SuperNetConfig::edge_index(const Edge& e) const {
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i] == e) return i;
  }
  throw Error(Status::Internal, "edge not in configuration");
}

ArchParams ArchParams::zeros(const SuperNetConfig& config) {
  const auto c = config.normalized();
  ArchParams p;
  p.alpha.assign(c.num_cell_groups(),
                 std::vector<std::vector<double>>(
                     c.edges.size(),
                     std::vector<double>(c.operator_set.size(), 0.0)));
  p.beta.resize(c.num_cell_groups());
  const std::size_t k = c.num_input_nodes();
  for (auto& group : p.beta) {
    group.resize(c.nodes_per_cell);
    for (std::size_t n = 0; n < c.nodes_per_cell; ++n) {
      group[n].assign(c.combinations_of(k + n).size(), 0.0);
    }
  }
  return p;
}

std::vector<double> ArchParams::flat_alpha() const {
  std::vector<double> out;
  for (const auto& group : alpha) {
    for (const auto& edge : group) {
      out.insert(out.end(), edge.begin(), edge.end());
    }
  }
  return out;
}

void ArchParams::set_flat_alpha(const std::vector<double>& v) {
  std::size_t off = 0;
  for (auto& group : alpha) {
    for (auto& edge : group) {
      for (auto& x : edge) {
        if (off >= v.size()) {
          throw Error(Status::InvalidArgument, "flat alpha too short");
        }
        x = v[off++];
      }
    }
  }
  if (off != v.size()) {
    throw Error(Status::InvalidArgument, "flat alpha length mismatch");
  }
}

std::vector<double> ArchParams::flat_beta() const {
  std::vector<double> out;
  for (const auto& group : beta) {
    for (const auto& node : group) {
      out.insert(out.end(), node.begin(), node.end());
    }
  }
  return out;
}

void ArchParams::set_flat_beta(const std::vector<double>& v) {
  std::size_t off = 0;
  for (auto& group : beta) {
    for (auto& node : group) {
      for (auto& x : node) {
        if (off >= v.size()) {
          throw Error(Status::InvalidArgument, "flat beta too short");
        }
        x = v[off++];
      }
    }
  }
  if (off != v.size()) {
    throw Error(Status::InvalidArgument, "flat beta length mismatch");
  }
}

std::string Genotype::to_json() const {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& group : nodes) {
    nlohmann::json jnodes = nlohmann::json::array();
    for (std::size_t n = 0; n < group.size(); ++n) {
      nlohmann::json inputs = nlohmann::json::array();
      for (const auto& e : group[n]) {
        inputs.push_back({{"from", e.from}, {"op", operator_kind_name(e.op)}});
      }
      jnodes.push_back({{"inputs", inputs}, {"node", n}});
    }
    groups.push_back({{"nodes", jnodes}});
  }
  return canonical_json({{"cell_groups", groups}});
}

Genotype Genotype::from_json(const std::string& text) {
  Genotype g;
  const auto j = nlohmann::json::parse(text);
  for (const auto& group : j.at("cell_groups")) {
    std::vector<std::vector<GenotypeEdge>> nodes;
    for (const auto& node : group.at("nodes")) {
      std::vector<GenotypeEdge> edges;
      for (const auto& in : node.at("inputs")) {
        edges.push_back({in.at("from").get<std::size_t>(),
                         operator_kind_from_name(in.at("op"))});
      }
      nodes.push_back(std::move(edges));
    }
    g.nodes.push_back(std::move(nodes));
  }
  return g;
}

std::size_t Genotype::edge_count() const {
  std::size_t n = 0;
  for (const auto& group : nodes) {
    for (const auto& node : group) n += node.size();
  }
  return n;
}

namespace {

void push_entry(OmegaLayout& layout, std::string name,
                std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  layout.entries.push_back({std::move(name), std::move(shape), layout.total});
  layout.total += n;
}

void push_stem_and_head(OmegaLayout& layout, const SuperNetConfig& c,
                        bool head_after) {
  for (std::size_t f = 0; f < c.input_feeds.size(); ++f) {
    const auto& feed = c.input_feeds[f];
    if (feed.stem) {
      push_entry(layout, "stem" + std::to_string(f) + ".W",
                 {feed.end - feed.begin, c.feature_dim});
      push_entry(layout, "stem" + std::to_string(f) + ".b", {c.feature_dim});
    }
  }
  if (head_after) {
    push_entry(layout, "head.W", {c.feature_dim, c.num_classes});
    push_entry(layout, "head.b", {c.num_classes});
  }
}

std::string edge_tag(std::size_t cell, const Edge& e) {
  return "cell" + std::to_string(cell) + ".edge" + std::to_string(e.from) +
         "_" + std::to_string(e.to);
}

}  // namespace

OmegaLayout supernet_omega_layout(const SuperNetConfig& config) {
  const auto c = config.normalized();
  OmegaLayout layout;
  push_stem_and_head(layout, c, false);
  for (std::size_t cell = 0; cell < c.num_cells; ++cell) {
    for (const auto& e : c.edges) {
      for (OperatorKind op : c.operator_set) {
        if (!operator_is_parametric(op)) continue;
        const std::string tag =
            edge_tag(cell, e) + "." + operator_kind_name(op);
        push_entry(layout, tag + ".W", {c.feature_dim, c.feature_dim});
        push_entry(layout, tag + ".b", {c.feature_dim});
      }
    }
  }
  push_entry(layout, "head.W", {c.feature_dim, c.num_classes});
  push_entry(layout, "head.b", {c.num_classes});
  return layout;
}

OmegaLayout subnet_omega_layout(const SuperNetConfig& config,
                                const Genotype& genotype) {
  const auto c = config.normalized();
  OmegaLayout layout;
  push_stem_and_head(layout, c, false);
  const std::size_t k = c.num_input_nodes();
  for (std::size_t cell = 0; cell < c.num_cells; ++cell) {
    const auto& group =
        genotype.nodes[c.share_cell_params ? 0 : cell];
    for (std::size_t n = 0; n < group.size(); ++n) {
      for (const auto& e : group[n]) {
        if (!operator_is_parametric(e.op)) continue;
        const std::string tag = edge_tag(cell, {e.from, k + n}) + "." +
                                operator_kind_name(e.op);
        push_entry(layout, tag + ".W", {c.feature_dim, c.feature_dim});
        push_entry(layout, tag + ".b", {c.feature_dim});
      }
    }
  }
  push_entry(layout, "head.W", {c.feature_dim, c.num_classes});
  push_entry(layout, "head.b", {c.num_classes});
  return layout;
}

std::vector<double> init_omega(const OmegaLayout& layout, Rng& rng) {
  std::vector<double> out(layout.total, 0.0);
  for (const auto& entry : layout.entries) {
    std::size_t n = 1;
    for (auto d : entry.shape) n *= d;
    const bool is_bias = entry.shape.size() == 1;
    if (is_bias) continue;  // biases start at zero
    const double scale = 1.0 / std::sqrt(static_cast<double>(entry.shape[0]));
    for (std::size_t i = 0; i < n; ++i) {
      out[entry.offset + i] = rng.normal(0.0, scale);
    }
  }
  return out;
}

namespace {

/// Leaf refs for every layout entry, created in layout order.
std::vector<ValueRef> make_omega_leaves(Tape& tape, const OmegaLayout& layout,
                                        const std::vector<double>& omega) {
  if (omega.size() != layout.total) {
    throw Error(Status::ShapeMismatch,
                "omega vector length " + std::to_string(omega.size()) +
                    " does not match layout size " +
                    std::to_string(layout.total));
  }
  std::vector<ValueRef> leaves;
  leaves.reserve(layout.entries.size());
  for (const auto& entry : layout.entries) {
    std::size_t n = 1;
    for (auto d : entry.shape) n *= d;
    Tensor t(entry.shape,
             std::vector<double>(omega.begin() + entry.offset,
                                 omega.begin() + entry.offset + n));
    leaves.push_back(tape.leaf(std::move(t), "omega"));
  }
  return leaves;
}

std::size_t layout_index(const OmegaLayout& layout, const std::string& name) {
  for (std::size_t i = 0; i < layout.entries.size(); ++i) {
    if (layout.entries[i].name == name) return i;
  }
  throw Error(Status::Internal, "layout entry not found: " + name);
}

/// Scalar {1}-shaped weight extracted from a softmax vector: sum(w * e_k).
ValueRef pick_weight(Tape& tape, ValueRef weights, std::size_t index,
                     std::size_t size) {
  Tensor onehot({size});
  onehot[index] = 1.0;
  return tape.sum(tape.mul(weights, tape.constant(std::move(onehot))));
}

ValueRef apply_operator(Tape& tape, OperatorKind op, ValueRef x,
                        ValueRef w, ValueRef b) {
  switch (op) {
    case OperatorKind::SkipConnect: return x;
    case OperatorKind::Linear: return tape.affine(x, w, b);
    case OperatorKind::NonLinear: return tape.tanh(tape.affine(x, w, b));
    case OperatorKind::None:
      throw Error(Status::Internal, "the zero operator has no output");
  }
  throw Error(Status::Internal, "unknown operator");
}

Tensor node_mean_projection(std::size_t nodes, std::size_t dim) {
  Tensor p({nodes * dim, dim});
  for (std::size_t n = 0; n < nodes; ++n) {
    for (std::size_t d = 0; d < dim; ++d) {
      p.at(n * dim + d, d) = 1.0 / static_cast<double>(nodes);
    }
  }
  return p;
}

}  // namespace

ValueRef mixed_edge_output(Tape& tape, ValueRef x, ValueRef logits,
                           const std::vector<OperatorKind>& operator_set,
                           const std::vector<std::pair<ValueRef, ValueRef>>&
                               op_params) {
  if (tape.value(x).shape().size() != 2) {
    throw Error(Status::ShapeMismatch,
                "mixed edge input must be (batch, feature_dim)");
  }
  const std::size_t num_ops = operator_set.size();
  if (tape.value(logits).numel() != num_ops || op_params.size() != num_ops) {
    throw Error(Status::ShapeMismatch,
                "edge logits must have one entry per operator");
  }
  ValueRef weights = tape.softmax_last_axis(logits);
  bool have = false;
  ValueRef acc{};
  for (std::size_t k = 0; k < num_ops; ++k) {
    if (operator_set[k] == OperatorKind::None) continue;  // zero map
    ValueRef out = apply_operator(tape, operator_set[k], x, op_params[k].first,
                                  op_params[k].second);
    ValueRef term = tape.scale(out, pick_weight(tape, weights, k, num_ops));
    acc = have ? tape.add(acc, term) : term;
    have = true;
  }
  if (!have) {
    // all operators are the zero map
    return tape.constant(Tensor(tape.value(x).shape()));
  }
  return acc;
}

ValueRef node_output_edge_search(
    Tape& tape, const std::vector<ValueRef>& inputs, ValueRef beta_logits,
    const std::vector<std::pair<std::size_t, std::size_t>>& combos) {
  if (combos.empty()) {
    throw Error(Status::InvalidArgument,
                "edge search requires at least one input combination");
  }
  if (tape.value(beta_logits).numel() != combos.size()) {
    throw Error(Status::ShapeMismatch,
                "beta logits must have one entry per combination");
  }
  ValueRef weights = tape.softmax_last_axis(beta_logits);
  bool have = false;
  ValueRef acc{};
  for (std::size_t c = 0; c < combos.size(); ++c) {
    ValueRef pair_sum =
        tape.add(inputs[combos[c].first], inputs[combos[c].second]);
    ValueRef term =
        tape.scale(pair_sum, pick_weight(tape, weights, c, combos.size()));
    acc = have ? tape.add(acc, term) : term;
    have = true;
  }
  return acc;
}

ForwardResult supernet_forward(Tape& tape, const SuperNetConfig& config,
                               const ArchParams& arch,
                               const std::vector<double>& omega_flat,
                               const OmegaLayout& layout, const Batch& batch,
                               ArchMode mode) {
  const auto c = config.normalized();
  if (batch.points.shape().size() != 2 ||
      batch.points.cols() != c.input_dim) {
    throw Error(Status::ShapeMismatch,
                "batch points must be (batch, input_dim)");
  }
  if (batch.labels.size() != batch.points.rows()) {
    throw Error(Status::ShapeMismatch, "one label per batch row required");
  }
  const std::size_t groups = c.num_cell_groups();
  if (arch.alpha.size() != groups) {
    throw Error(Status::ShapeMismatch, "alpha has wrong cell-group count");
  }

  auto omega_leaves = make_omega_leaves(tape, layout, omega_flat);

  // Architectural logits, registered in flat order. In operator search the
  // alpha logits are trainable and beta (if any) enters as constants; in edge
  // search the roles flip.
  std::vector<std::vector<ValueRef>> alpha_refs(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t e = 0; e < c.edges.size(); ++e) {
      Tensor logits({c.operator_set.size()},
                    std::vector<double>(arch.alpha[g][e]));
      alpha_refs[g].push_back(mode == ArchMode::OperatorSearch
                                  ? tape.leaf(std::move(logits), "alpha")
                                  : tape.constant(std::move(logits)));
    }
  }
  const std::size_t k = c.num_input_nodes();
  std::vector<std::vector<ValueRef>> beta_refs(groups);
  if (c.use_beta) {
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t n = 0; n < c.nodes_per_cell; ++n) {
        const auto combos = c.combinations_of(k + n);
        if (combos.empty()) {
          beta_refs[g].push_back(ValueRef{});
          continue;
        }
        Tensor logits({combos.size()}, std::vector<double>(arch.beta[g][n]));
        beta_refs[g].push_back(mode == ArchMode::EdgeSearch
                                   ? tape.leaf(std::move(logits), "alpha")
                                   : tape.constant(std::move(logits)));
      }
    }
  } else if (mode == ArchMode::EdgeSearch) {
    throw Error(Status::Config, "edge search requires use_beta");
  }

  // Input feeds for the first cell.
  std::vector<ValueRef> feed_vals;
  for (std::size_t f = 0; f < c.input_feeds.size(); ++f) {
    const auto& feed = c.input_feeds[f];
    Tensor slice({batch.points.rows(), feed.end - feed.begin});
    for (std::size_t r = 0; r < batch.points.rows(); ++r) {
      for (std::size_t col = feed.begin; col < feed.end; ++col) {
        slice.at(r, col - feed.begin) = batch.points.at(r, col);
      }
    }
    ValueRef v = tape.constant(std::move(slice));
    if (feed.stem) {
      const std::size_t wi =
          layout_index(layout, "stem" + std::to_string(f) + ".W");
      v = tape.affine(v, omega_leaves[wi], omega_leaves[wi + 1]);
    }
    feed_vals.push_back(v);
  }

  const Tensor projection =
      node_mean_projection(c.nodes_per_cell, c.feature_dim);

  ValueRef cell_in = feed_vals[0];
  for (std::size_t cell = 0; cell < c.num_cells; ++cell) {
    const std::size_t g = c.share_cell_params ? 0 : cell;
    std::vector<ValueRef> node_vals(c.num_nodes());
    node_vals[0] = cell_in;
    for (std::size_t f = 1; f < k; ++f) node_vals[f] = feed_vals[f];

    for (std::size_t n = 0; n < c.nodes_per_cell; ++n) {
      const std::size_t j = k + n;
      const auto in_edges = c.edges_into(j);
      std::vector<ValueRef> mixed;
      for (const auto& e : in_edges) {
        const std::size_t ei = c.edge_index(e);
        std::vector<std::pair<ValueRef, ValueRef>> op_params;
        for (OperatorKind op : c.operator_set) {
          if (operator_is_parametric(op)) {
            const std::string tag =
                edge_tag(cell, e) + "." + operator_kind_name(op);
            const std::size_t wi = layout_index(layout, tag + ".W");
            op_params.emplace_back(omega_leaves[wi], omega_leaves[wi + 1]);
          } else {
            op_params.emplace_back(ValueRef{}, ValueRef{});
          }
        }
        mixed.push_back(mixed_edge_output(tape, node_vals[e.from],
                                          alpha_refs[g][ei], c.operator_set,
                                          op_params));
      }

      const auto combos = c.combinations_of(j);
      if (c.use_beta && combos.size() >= 1 && in_edges.size() >= 2) {
        // combos refer to candidate positions in the sorted edge list
        std::vector<std::pair<std::size_t, std::size_t>> positions;
        for (const auto& [a, b] : combos) {
          std::size_t pa = 0, pb = 0;
          for (std::size_t i = 0; i < in_edges.size(); ++i) {
            if (in_edges[i].from == a) pa = i;
            if (in_edges[i].from == b) pb = i;
          }
          positions.emplace_back(pa, pb);
        }
        node_vals[j] = node_output_edge_search(tape, mixed, beta_refs[g][n],
                                               positions);
      } else if (!mixed.empty()) {
        ValueRef acc = mixed[0];
        for (std::size_t i = 1; i < mixed.size(); ++i) {
          acc = tape.add(acc, mixed[i]);
        }
        node_vals[j] = acc;
      } else {
        node_vals[j] = tape.constant(
            Tensor({batch.points.rows(), c.feature_dim}));
      }
    }

    if (c.nodes_per_cell == 1) {
      cell_in = node_vals[k];
    } else {
      std::vector<ValueRef> parts(node_vals.begin() + k, node_vals.end());
      cell_in = tape.matmul(tape.concat(parts), tape.constant(projection));
    }
  }

  const std::size_t hw = layout_index(layout, "head.W");
  ValueRef logits = tape.affine(cell_in, omega_leaves[hw],
                                omega_leaves[hw + 1]);
  ValueRef loss = tape.softmax_cross_entropy(logits, batch.labels);
  return {loss, logits};
}

ForwardResult subnet_forward(Tape& tape, const SuperNetConfig& config,
                             const Genotype& genotype,
                             const std::vector<double>& omega_flat,
                             const OmegaLayout& layout, const Batch& batch) {
  const auto c = config.normalized();
  if (genotype.nodes.size() != c.num_cell_groups()) {
    throw Error(Status::ShapeMismatch, "genotype has wrong cell-group count");
  }
  auto omega_leaves = make_omega_leaves(tape, layout, omega_flat);

  std::vector<ValueRef> feed_vals;
  for (std::size_t f = 0; f < c.input_feeds.size(); ++f) {
    const auto& feed = c.input_feeds[f];
    Tensor slice({batch.points.rows(), feed.end - feed.begin});
    for (std::size_t r = 0; r < batch.points.rows(); ++r) {
      for (std::size_t col = feed.begin; col < feed.end; ++col) {
        slice.at(r, col - feed.begin) = batch.points.at(r, col);
      }
    }
    ValueRef v = tape.constant(std::move(slice));
    if (feed.stem) {
      const std::size_t wi =
          layout_index(layout, "stem" + std::to_string(f) + ".W");
      v = tape.affine(v, omega_leaves[wi], omega_leaves[wi + 1]);
    }
    feed_vals.push_back(v);
  }

  const Tensor projection =
      node_mean_projection(c.nodes_per_cell, c.feature_dim);
  const std::size_t k = c.num_input_nodes();

  ValueRef cell_in = feed_vals[0];
  for (std::size_t cell = 0; cell < c.num_cells; ++cell) {
    const auto& group = genotype.nodes[c.share_cell_params ? 0 : cell];
    std::vector<ValueRef> node_vals(c.num_nodes());
    node_vals[0] = cell_in;
    for (std::size_t f = 1; f < k; ++f) node_vals[f] = feed_vals[f];

    for (std::size_t n = 0; n < c.nodes_per_cell; ++n) {
      const std::size_t j = k + n;
      bool have = false;
      ValueRef acc{};
      for (const auto& e : group[n]) {
        ValueRef w{}, b{};
        if (operator_is_parametric(e.op)) {
          const std::string tag = edge_tag(cell, {e.from, j}) + "." +
                                  operator_kind_name(e.op);
          const std::size_t wi = layout_index(layout, tag + ".W");
          w = omega_leaves[wi];
          b = omega_leaves[wi + 1];
        }
        ValueRef out = apply_operator(tape, e.op, node_vals[e.from], w, b);
        acc = have ? tape.add(acc, out) : out;
        have = true;
      }
      node_vals[j] = have ? acc
                          : tape.constant(
                                Tensor({batch.points.rows(), c.feature_dim}));
    }

    if (c.nodes_per_cell == 1) {
      cell_in = node_vals[k];
    } else {
      std::vector<ValueRef> parts(node_vals.begin() + k, node_vals.end());
      cell_in = tape.matmul(tape.concat(parts), tape.constant(projection));
    }
  }

  const std::size_t hw = layout_index(layout, "head.W");
  ValueRef logits = tape.affine(cell_in, omega_leaves[hw],
                                omega_leaves[hw + 1]);
  ValueRef loss = tape.softmax_cross_entropy(logits, batch.labels);
  return {loss, logits};
}

std::vector<double> softmax_weights(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> w(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = pexp(logits[i] - mx);
    denom += w[i];
  }
  for (auto& v : w) v /= denom;
  return w;
}

namespace {

struct EdgeChoice {
  std::size_t from;
  OperatorKind op;
  double top_weight;
};

/// Best non-None operator for one edge; ties to the lowest operator index.
EdgeChoice choose_operator(const SuperNetConfig& c,
                           const std::vector<double>& logits,
                           std::size_t from) {
  const auto weights = softmax_weights(logits);
  int best = -1;
  for (std::size_t k = 0; k < c.operator_set.size(); ++k) {
    if (c.operator_set[k] == OperatorKind::None) continue;
    if (best < 0 || logits[k] > logits[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(k);
    }
  }
  if (best < 0) {
    throw Error(Status::Config,
                "cannot discretize: operator set contains only the zero map");
  }
  const auto b = static_cast<std::size_t>(best);
  return {from, c.operator_set[b], weights[b]};
}

}  // namespace

Genotype discretize(const ArchParams& arch, const SuperNetConfig& config) {
  const auto c = config.normalized();
  const std::size_t k = c.num_input_nodes();
  Genotype g;
  g.nodes.resize(c.num_cell_groups());
  for (std::size_t grp = 0; grp < c.num_cell_groups(); ++grp) {
    auto& out_nodes = g.nodes[grp];
    out_nodes.resize(c.nodes_per_cell);
    for (std::size_t n = 0; n < c.nodes_per_cell; ++n) {
      const std::size_t j = k + n;
      const auto in_edges = c.edges_into(j);
      std::vector<EdgeChoice> choices;
      for (const auto& e : in_edges) {
        choices.push_back(choose_operator(
            c, arch.alpha[grp][c.edge_index(e)], e.from));
      }

      const auto combos = c.combinations_of(j);
      std::vector<EdgeChoice> kept;
      if (c.use_beta && !combos.empty() && in_edges.size() >= 2) {
        // argmax combination; ties to the lexicographically lowest pair
        const auto& logits = arch.beta[grp][n];
        std::size_t best = 0;
        for (std::size_t i = 1; i < combos.size(); ++i) {
          if (logits[i] > logits[best]) best = i;
        }
        for (const auto& ch : choices) {
          if (ch.from == combos[best].first ||
              ch.from == combos[best].second) {
            kept.push_back(ch);
          }
        }
      } else if (c.prune_edges && choices.size() > c.inputs_per_node) {
        // rank by top-operator weight; stable sort keeps the lowest source
        // index first on ties
        std::vector<EdgeChoice> ranked = choices;
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const EdgeChoice& a, const EdgeChoice& b) {
                           return a.top_weight > b.top_weight;
                         });
        ranked.resize(c.inputs_per_node);
        std::sort(ranked.begin(), ranked.end(),
                  [](const EdgeChoice& a, const EdgeChoice& b) {
                    return a.from < b.from;
                  });
        kept = ranked;
      } else {
        kept = choices;
      }

      auto& node = out_nodes[n];
      for (const auto& ch : kept) node.push_back({ch.from, ch.op});
    }
  }
  return g;
}

DegenerationMetrics degeneration_metrics(const ArchParams& arch,
                                         const SuperNetConfig& config) {
  const auto c = config.normalized();
  DegenerationMetrics m;

  int none_index = -1;
  for (std::size_t i = 0; i < c.operator_set.size(); ++i) {
    if (c.operator_set[i] == OperatorKind::None) {
      none_index = static_cast<int>(i);
    }
  }
  std::size_t count = 0;
  double total = 0.0;
  for (const auto& group : arch.alpha) {
    for (const auto& logits : group) {
      if (none_index >= 0) {
        total += softmax_weights(logits)[static_cast<std::size_t>(none_index)];
      }
      ++count;
    }
  }
  m.mean_none_weight = count ? total / static_cast<double>(count) : 0.0;

  const Genotype g = discretize(arch, config);
  std::size_t skips = 0;
  for (const auto& group : g.nodes) {
    for (const auto& node : group) {
      for (const auto& e : node) {
        if (e.op == OperatorKind::SkipConnect) ++skips;
      }
    }
  }
  const std::size_t edges = g.edge_count();
  m.skip_ratio = edges ? static_cast<double>(skips) /
                             static_cast<double>(edges)
                       : 0.0;
  return m;
}

double accuracy_from_logits(const Tensor& logits,
                            const std::vector<int>& labels) {
  if (logits.shape().size() != 2 || logits.rows() != labels.size()) {
    throw Error(Status::ShapeMismatch, "logits/labels mismatch");
  }
  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    if (static_cast<int>(best) == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace ag
