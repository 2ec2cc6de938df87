#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "archgrad/tensor.hpp"

namespace ag {

/// Handle to a value recorded on a Tape.
struct ValueRef {
  std::uint32_t index = 0;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,           // elementwise multiply
  MatMul,
  ScaleConst,    // x * c, c a fixed scalar
  ScaleScalar,   // x * s, s a recorded {1}-shaped value
  Tanh,
  Relu,
  SoftmaxLastAxis,
  Log,
  Sum,
  Mean,
  SquaredError,  // sum((a - b)^2)
  SoftmaxCrossEntropy,  // mean NLL over integer labels
  Concat,        // along last axis, rank-2 inputs
  Affine,        // x*W + b (bias broadcast over rows)
};

const char* op_kind_name(OpKind k);

/// Reverse-mode gradients for the leaves of requested parameter groups.
struct GradientBundle {
  std::map<std::string, std::vector<std::pair<ValueRef, Tensor>>> by_group;

  const Tensor& grad(const std::string& group, ValueRef leaf) const;
  /// Gradients of a group's leaves concatenated in creation order.
  std::vector<double> flat(const std::string& group) const;
};

/// Define-by-run tape: a fresh Tape is built per forward pass and discarded
/// after backward. Nodes reference only earlier nodes, so the recording order
/// is already a topological order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// A differentiable input. Group "" means trainability without membership;
  /// a named group ("omega", "alpha", ...) registers the leaf for backward.
  ValueRef leaf(Tensor value, const std::string& group = "");

  /// A fixed input; no gradient is accumulated for it.
  ValueRef constant(Tensor value);

  ValueRef add(ValueRef a, ValueRef b);
  ValueRef sub(ValueRef a, ValueRef b);
  ValueRef mul(ValueRef a, ValueRef b);
  ValueRef matmul(ValueRef a, ValueRef b);
  ValueRef scale(ValueRef x, double c);
  ValueRef scale(ValueRef x, ValueRef s);
  ValueRef tanh(ValueRef x);
  ValueRef relu(ValueRef x);
  ValueRef softmax_last_axis(ValueRef x);
  ValueRef log(ValueRef x);
  ValueRef sum(ValueRef x);
  ValueRef mean(ValueRef x);
  ValueRef squared_error(ValueRef a, ValueRef b);
  ValueRef softmax_cross_entropy(ValueRef logits, std::vector<int> labels);
  ValueRef concat(const std::vector<ValueRef>& parts);
  ValueRef affine(ValueRef x, ValueRef w, ValueRef b);

  const Tensor& value(ValueRef r) const { return nodes_[r.index].value; }
  std::size_t size() const { return nodes_.size(); }

  bool has_group(const std::string& group) const {
    return groups_.count(group) != 0;
  }
  const std::vector<ValueRef>& group_leaves(const std::string& group) const;

  /// Exact reverse-mode gradients of a scalar output for every leaf in the
  /// requested groups. Leaves outside the requested groups are skipped.
  GradientBundle backward(ValueRef output,
                          const std::set<std::string>& groups) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<ValueRef> inputs;
    Tensor value;
    double scalar = 0.0;          // ScaleConst factor
    std::vector<int> labels;      // SoftmaxCrossEntropy
    Tensor aux;                   // cached softmax probabilities
  };

  ValueRef push(Node node);
  const Tensor& val(ValueRef r) const { return nodes_[r.index].value; }

  std::vector<Node> nodes_;
  std::map<std::string, std::vector<ValueRef>> groups_;
};

}  // namespace ag
