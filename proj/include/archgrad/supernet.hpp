#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "archgrad/rng.hpp"
#include "archgrad/tape.hpp"

namespace ag {

/// Candidate operators on an edge. None is the zero map and SkipConnect the
/// identity; neither has trainable parameters. Linear is a trainable affine
/// map and NonLinear is affine followed by tanh.
enum class OperatorKind : int {
  None = 0,
  SkipConnect = 1,
  Linear = 2,
  NonLinear = 3,
};

const char* operator_kind_name(OperatorKind k);
OperatorKind operator_kind_from_name(const std::string& name);
bool operator_is_parametric(OperatorKind k);

/// Columns [begin, end) of the dataset feeding one input node of the first
/// cell. Stemmed feeds pass through a trainable affine projection to
/// feature_dim; raw feeds require end - begin == feature_dim.
struct InputFeed {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool stem = true;
};

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  bool operator==(const Edge&) const = default;
};

struct SuperNetConfig {
  std::size_t num_cells = 1;
  std::size_t nodes_per_cell = 2;   // computed nodes per cell
  std::size_t feature_dim = 4;
  std::size_t num_classes = 2;
  std::size_t input_dim = 2;
  std::vector<InputFeed> input_feeds;  // defaults to one stemmed feed
  std::vector<Edge> edges;             // defaults to the full DAG
  bool share_cell_params = true;       // one alpha for all cells
  std::vector<OperatorKind> operator_set = {
      OperatorKind::None, OperatorKind::SkipConnect, OperatorKind::Linear,
      OperatorKind::NonLinear};
  std::size_t inputs_per_node = 2;
  bool prune_edges = true;  // keep inputs_per_node edges per node at discretization
  bool use_beta = false;    // edge-combination search active

  std::size_t num_input_nodes() const;
  std::size_t num_nodes() const;  // input + computed, per cell
  std::size_t num_cell_groups() const {
    return share_cell_params ? 1 : num_cells;
  }

  /// All (i, j) with i < j and j a computed node.
  static std::vector<Edge> full_edges(std::size_t num_inputs,
                                      std::size_t computed);
  /// Each computed node connected to its predecessor only.
  static std::vector<Edge> chain_edges(std::size_t num_inputs,
                                       std::size_t computed);

  /// Edges into node j, sorted by source. Fills defaults first.
  std::vector<Edge> edges_into(std::size_t j) const;
  /// Candidate source nodes of j, ascending.
  std::vector<std::size_t> candidates_of(std::size_t j) const;
  /// All source pairs (i1, i2), i1 < i2, lexicographic; empty when the node
  /// has fewer than two candidates.
  std::vector<std::pair<std::size_t, std::size_t>> combinations_of(
      std::size_t j) const;
  std::size_t edge_index(const Edge& e) const;

  void validate() const;
  SuperNetConfig normalized() const;  // defaults filled in, edges sorted
};

/// Architectural parameters: per-edge operator logits and per-node
/// edge-combination logits, one set per cell group.
struct ArchParams {
  // alpha[group][edge][operator]
  std::vector<std::vector<std::vector<double>>> alpha;
  // beta[group][computed-node][combination]; inner vector empty when the
  // node has fewer than two candidates
  std::vector<std::vector<std::vector<double>>> beta;

  static ArchParams zeros(const SuperNetConfig& config);

  std::vector<double> flat_alpha() const;
  void set_flat_alpha(const std::vector<double>& v);
  std::vector<double> flat_beta() const;
  void set_flat_beta(const std::vector<double>& v);
};

struct GenotypeEdge {
  std::size_t from = 0;
  OperatorKind op = OperatorKind::SkipConnect;
  bool operator==(const GenotypeEdge&) const = default;
};

/// Discrete architecture: chosen input edges and operator per computed node,
/// for each cell group.
struct Genotype {
  // nodes[group][computed-node] -> edges sorted by source
  std::vector<std::vector<std::vector<GenotypeEdge>>> nodes;
  bool operator==(const Genotype&) const = default;

  std::string to_json() const;
  static Genotype from_json(const std::string& text);
  std::size_t edge_count() const;
};

/// Flat parameter vector layout for the network weights.
struct OmegaLayout {
  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
  };
  std::vector<Entry> entries;
  std::size_t total = 0;
};

/// Layout for the mixture super-network (all parametric operators present).
OmegaLayout supernet_omega_layout(const SuperNetConfig& config);
/// Layout for a discretized sub-network (only the genotype's operators).
OmegaLayout subnet_omega_layout(const SuperNetConfig& config,
                                const Genotype& genotype);

std::vector<double> init_omega(const OmegaLayout& layout, Rng& rng);

struct Batch {
  Tensor points;            // (batch, input_dim)
  std::vector<int> labels;  // class indices
};

enum class ArchMode {
  OperatorSearch,  // alpha trainable (group "alpha"), beta fixed
  EdgeSearch,      // beta trainable (group "alpha"), alpha fixed
};

struct ForwardResult {
  ValueRef loss;
  ValueRef logits;
};

/// Softmax-weighted sum of operator outputs on one edge. op_params carries
/// (W, b) refs for the parametric operators, in operator_set order.
ValueRef mixed_edge_output(Tape& tape, ValueRef x, ValueRef logits,
                           const std::vector<OperatorKind>& operator_set,
                           const std::vector<std::pair<ValueRef, ValueRef>>&
                               op_params);

/// Softmax-weighted sum over input combinations: sum_c w_c (y_{c1} + y_{c2}).
/// combos index into `inputs`.
ValueRef node_output_edge_search(
    Tape& tape, const std::vector<ValueRef>& inputs, ValueRef beta_logits,
    const std::vector<std::pair<std::size_t, std::size_t>>& combos);

/// Full mixture forward pass; records groups "omega" and "alpha" on the tape.
ForwardResult supernet_forward(Tape& tape, const SuperNetConfig& config,
                               const ArchParams& arch,
                               const std::vector<double>& omega_flat,
                               const OmegaLayout& layout, const Batch& batch,
                               ArchMode mode = ArchMode::OperatorSearch);

/// Discrete sub-network forward pass (exact operators, no mixtures).
ForwardResult subnet_forward(Tape& tape, const SuperNetConfig& config,
                             const Genotype& genotype,
                             const std::vector<double>& omega_flat,
                             const OmegaLayout& layout, const Batch& batch);

/// Per preserved edge, argmax over the non-None operator logits; edge
/// preservation by combination argmax (beta active) or by largest
/// top-operator weight (prune_edges). Ties break to the lowest operator
/// index, then the lowest edge index.
Genotype discretize(const ArchParams& arch, const SuperNetConfig& config);

struct DegenerationMetrics {
  double mean_none_weight = 0.0;
  double skip_ratio = 0.0;
};

DegenerationMetrics degeneration_metrics(const ArchParams& arch,
                                         const SuperNetConfig& config);

double accuracy_from_logits(const Tensor& logits,
                            const std::vector<int>& labels);

/// Plain softmax on a logit vector (pexp-based, bit-portable).
std::vector<double> softmax_weights(const std::vector<double>& logits);

}  // namespace ag
