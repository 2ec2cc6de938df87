#include "archgrad/tape.hpp"

#include <algorithm>
#include <cmath>

#include "archgrad/pmath.hpp"
#include "archgrad/status.hpp"

namespace ag {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
  throw Error(Status::ShapeMismatch, std::string(op) + ": bad input shape " +
                                         shape_string(a.shape()));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a,
                              const Tensor& b) {
  throw Error(Status::ShapeMismatch,
              std::string(op) + ": incompatible shapes " +
                  shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

}  // namespace

const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "subtract";
    case OpKind::Mul: return "elementwise-multiply";
    case OpKind::MatMul: return "matrix-multiply";
    case OpKind::ScaleConst: return "scalar-scale";
    case OpKind::ScaleScalar: return "scalar-scale";
    case OpKind::Tanh: return "tanh";
    case OpKind::Relu: return "relu";
    case OpKind::SoftmaxLastAxis: return "softmax-over-last-axis";
    case OpKind::Log: return "log";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::SquaredError: return "squared-error";
    case OpKind::SoftmaxCrossEntropy:
      return "softmax-cross-entropy-with-integer-labels";
    case OpKind::Concat: return "concatenate";
    case OpKind::Affine: return "affine";
  }
  return "unknown";
}

const Tensor& GradientBundle::grad(const std::string& group,
                                   ValueRef leaf) const {
  auto it = by_group.find(group);
  if (it == by_group.end()) {
    throw Error(Status::InvalidArgument, "no gradients for group " + group);
  }
  for (const auto& [ref, g] : it->second) {
    if (ref.index == leaf.index) return g;
  }
  throw Error(Status::InvalidArgument,
              "leaf not found in group " + group);
}

std::vector<double> GradientBundle::flat(const std::string& group) const {
  auto it = by_group.find(group);
  if (it == by_group.end()) {
    throw Error(Status::InvalidArgument, "no gradients for group " + group);
  }
  std::vector<double> out;
  for (const auto& [ref, g] : it->second) {
    out.insert(out.end(), g.data().begin(), g.data().end());
  }
  return out;
}

ValueRef Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return ValueRef{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

ValueRef Tape::leaf(Tensor value, const std::string& group) {
  ValueRef r = push({OpKind::Leaf, {}, std::move(value)});
  if (!group.empty()) groups_[group].push_back(r);
  return r;
}

ValueRef Tape::constant(Tensor value) {
  return push({OpKind::Constant, {}, std::move(value)});
}

const std::vector<ValueRef>& Tape::group_leaves(
    const std::string& group) const {
  auto it = groups_.find(group);
  if (it == groups_.end()) {
    throw Error(Status::InvalidArgument, "unknown parameter group " + group);
  }
  return it->second;
}

ValueRef Tape::add(ValueRef a, ValueRef b) {
  const Tensor& x = val(a);
  const Tensor& y = val(b);
  if (!x.same_shape(y)) shape_error("add", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] + y[i];
  return push({OpKind::Add, {a, b}, std::move(out)});
}

ValueRef Tape::sub(ValueRef a, ValueRef b) {
  const Tensor& x = val(a);
  const Tensor& y = val(b);
  if (!x.same_shape(y)) shape_error("subtract", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] - y[i];
  return push({OpKind::Sub, {a, b}, std::move(out)});
}

ValueRef Tape::mul(ValueRef a, ValueRef b) {
  const Tensor& x = val(a);
  const Tensor& y = val(b);
  if (!x.same_shape(y)) shape_error("elementwise-multiply", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * y[i];
  return push({OpKind::Mul, {a, b}, std::move(out)});
}

ValueRef Tape::matmul(ValueRef a, ValueRef b) {
  return push({OpKind::MatMul, {a, b}, ag::matmul(val(a), val(b))});
}

ValueRef Tape::scale(ValueRef x, double c) {
  const Tensor& v = val(x);
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.numel(); ++i) out[i] = v[i] * c;
  Node n{OpKind::ScaleConst, {x}, std::move(out)};
  n.scalar = c;
  return push(std::move(n));
}

ValueRef Tape::scale(ValueRef x, ValueRef s) {
  const Tensor& v = val(x);
  const Tensor& sv = val(s);
  if (sv.numel() != 1) shape_error("scalar-scale", v, sv);
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.numel(); ++i) out[i] = v[i] * sv[0];
  return push({OpKind::ScaleScalar, {x, s}, std::move(out)});
}

ValueRef Tape::tanh(ValueRef x) {
  const Tensor& v = val(x);
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.numel(); ++i) out[i] = ptanh(v[i]);
  return push({OpKind::Tanh, {x}, std::move(out)});
}

ValueRef Tape::relu(ValueRef x) {
  const Tensor& v = val(x);
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.numel(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return push({OpKind::Relu, {x}, std::move(out)});
}

ValueRef Tape::softmax_last_axis(ValueRef x) {
  const Tensor& v = val(x);
  if (v.shape().empty()) shape_error("softmax-over-last-axis", v);
  const std::size_t cols = v.shape().back();
  const std::size_t rows = v.numel() / cols;
  if (cols == 0) shape_error("softmax-over-last-axis", v);
  Tensor out(v.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * cols;
    double mx = v[base];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, v[base + c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[base + c] = pexp(v[base + c] - mx);
      denom += out[base + c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[base + c] /= denom;
  }
  return push({OpKind::SoftmaxLastAxis, {x}, std::move(out)});
}

ValueRef Tape::log(ValueRef x) {
  const Tensor& v = val(x);
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.numel(); ++i) {
    if (!(v[i] > 0.0)) {
      throw Error(Status::NonFinite, "log: nonpositive input");
    }
    out[i] = plog(v[i]);
  }
  return push({OpKind::Log, {x}, std::move(out)});
}

ValueRef Tape::sum(ValueRef x) {
  const Tensor& v = val(x);
  double s = 0.0;
  for (std::size_t i = 0; i < v.numel(); ++i) s += v[i];
  return push({OpKind::Sum, {x}, Tensor::scalar(s)});
}

ValueRef Tape::mean(ValueRef x) {
  const Tensor& v = val(x);
  if (v.numel() == 0) shape_error("mean", v);
  double s = 0.0;
  for (std::size_t i = 0; i < v.numel(); ++i) s += v[i];
  return push({OpKind::Mean, {x}, Tensor::scalar(s / v.numel())});
}

ValueRef Tape::squared_error(ValueRef a, ValueRef b) {
  const Tensor& x = val(a);
  const Tensor& y = val(b);
  if (!x.same_shape(y)) shape_error("squared-error", x, y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return push({OpKind::SquaredError, {a, b}, Tensor::scalar(s)});
}

ValueRef Tape::softmax_cross_entropy(ValueRef logits, std::vector<int> labels) {
  const Tensor& v = val(logits);
  if (v.shape().size() != 2) {
    shape_error("softmax-cross-entropy-with-integer-labels", v);
  }
  const std::size_t rows = v.rows(), cols = v.cols();
  if (labels.size() != rows) {
    throw Error(Status::ShapeMismatch,
                "softmax-cross-entropy-with-integer-labels: " +
                    std::to_string(labels.size()) + " labels for " +
                    std::to_string(rows) + " rows");
  }
  Tensor probs({rows, cols});
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= cols) {
      throw Error(Status::InvalidArgument,
                  "label " + std::to_string(label) + " out of range");
    }
    double mx = v.at(r, 0);
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, v.at(r, c));
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      probs.at(r, c) = pexp(v.at(r, c) - mx);
      denom += probs.at(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) probs.at(r, c) /= denom;
    loss += plog(denom) + mx - v.at(r, static_cast<std::size_t>(label));
  }
  Node n{OpKind::SoftmaxCrossEntropy, {logits},
         Tensor::scalar(loss / static_cast<double>(rows))};
  n.labels = std::move(labels);
  n.aux = std::move(probs);
  return push(std::move(n));
}

ValueRef Tape::concat(const std::vector<ValueRef>& parts) {
  if (parts.empty()) {
    throw Error(Status::InvalidArgument, "concatenate: no inputs");
  }
  const std::size_t rows = val(parts[0]).shape().size() == 2
                               ? val(parts[0]).rows()
                               : 0;
  std::size_t total_cols = 0;
  for (ValueRef p : parts) {
    const Tensor& t = val(p);
    if (t.shape().size() != 2 || t.rows() != rows || rows == 0) {
      shape_error("concatenate", t);
    }
    total_cols += t.cols();
  }
  Tensor out({rows, total_cols});
  std::size_t offset = 0;
  for (ValueRef p : parts) {
    const Tensor& t = val(p);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) {
        out.at(r, offset + c) = t.at(r, c);
      }
    }
    offset += t.cols();
  }
  return push({OpKind::Concat, parts, std::move(out)});
}

ValueRef Tape::affine(ValueRef x, ValueRef w, ValueRef b) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  const Tensor& bv = val(b);
  if (xv.shape().size() != 2 || wv.shape().size() != 2 ||
      xv.cols() != wv.rows()) {
    shape_error("affine", xv, wv);
  }
  if (bv.shape().size() != 1 || bv.numel() != wv.cols()) {
    shape_error("affine", wv, bv);
  }
  Tensor out = ag::matmul(xv, wv);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += bv[c];
  }
  return push({OpKind::Affine, {x, w, b}, std::move(out)});
}

GradientBundle Tape::backward(ValueRef output,
                              const std::set<std::string>& groups) const {
  const Tensor& out_val = val(output);
  if (out_val.numel() != 1) {
    throw Error(Status::NonScalarOutput,
                "backward: output has shape " + shape_string(out_val.shape()));
  }
  for (const auto& g : groups) {
    if (!groups_.count(g)) {
      throw Error(Status::InvalidArgument, "unknown parameter group " + g);
    }
  }

  // Adjoints, allocated lazily; empty tensor means "not reached".
  std::vector<Tensor> adj(nodes_.size());
  auto touch = [&](ValueRef r) -> Tensor& {
    Tensor& t = adj[r.index];
    if (t.numel() == 0) t = Tensor(val(r).shape());
    return t;
  };
  touch(output)[0] = 1.0;

  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    if (idx > output.index) continue;
    const Node& n = nodes_[idx];
    const Tensor& g = adj[idx];
    if (g.numel() == 0) continue;  // does not influence the output
    switch (n.kind) {
      case OpKind::Leaf:
      case OpKind::Constant:
        break;
      case OpKind::Add: {
        Tensor& da = touch(n.inputs[0]);
        Tensor& db = touch(n.inputs[1]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          da[i] += g[i];
          db[i] += g[i];
        }
        break;
      }
      case OpKind::Sub: {
        Tensor& da = touch(n.inputs[0]);
        Tensor& db = touch(n.inputs[1]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          da[i] += g[i];
          db[i] -= g[i];
        }
        break;
      }
      case OpKind::Mul: {
        const Tensor& a = val(n.inputs[0]);
        const Tensor& b = val(n.inputs[1]);
        Tensor& da = touch(n.inputs[0]);
        Tensor& db = touch(n.inputs[1]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          da[i] += g[i] * b[i];
          db[i] += g[i] * a[i];
        }
        break;
      }
      case OpKind::MatMul: {
        const Tensor& a = val(n.inputs[0]);
        const Tensor& b = val(n.inputs[1]);
        Tensor ga = ag::matmul(g, transpose(b));
        Tensor gb = ag::matmul(transpose(a), g);
        Tensor& da = touch(n.inputs[0]);
        Tensor& db = touch(n.inputs[1]);
        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += ga[i];
        for (std::size_t i = 0; i < db.numel(); ++i) db[i] += gb[i];
        break;
      }
      case OpKind::ScaleConst: {
        Tensor& da = touch(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * n.scalar;
        break;
      }
      case OpKind::ScaleScalar: {
        const Tensor& x = val(n.inputs[0]);
        const double s = val(n.inputs[1])[0];
        Tensor& dx = touch(n.inputs[0]);
        Tensor& ds = touch(n.inputs[1]);
        double acc = 0.0;
        for (std::size_t i = 0; i < g.numel(); ++i) {
          dx[i] += g[i] * s;
          acc += g[i] * x[i];
        }
        ds[0] += acc;
        break;
      }
      case OpKind::Tanh: {
        const Tensor& y = n.value;
        Tensor& dx = touch(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          dx[i] += g[i] * (1.0 - y[i] * y[i]);
        }
        break;
      }
      case OpKind::Relu: {
        const Tensor& x = val(n.inputs[0]);
        Tensor& dx = touch(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          if (x[i] > 0.0) dx[i] += g[i];
        }
        break;
      }
      case OpKind::SoftmaxLastAxis: {
        const Tensor& y = n.value;
        const std::size_t cols = y.shape().back();
        const std::size_t rows = y.numel() / cols;
        Tensor& dx = touch(n.inputs[0]);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * cols;
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            dot += g[base + c] * y[base + c];
          }
          for (std::size_t c = 0; c < cols; ++c) {
            dx[base + c] += y[base + c] * (g[base + c] - dot);
          }
        }
        break;
      }
      case OpKind::Log: {
        const Tensor& x = val(n.inputs[0]);
        Tensor& dx = touch(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += g[i] / x[i];
        break;
      }
      case OpKind::Sum: {
        Tensor& dx = touch(n.inputs[0]);
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += g[0];
        break;
      }
      case OpKind::Mean: {
        Tensor& dx = touch(n.inputs[0]);
        const double s = g[0] / static_cast<double>(dx.numel());
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += s;
        break;
      }
      case OpKind::SquaredError: {
        const Tensor& a = val(n.inputs[0]);
        const Tensor& b = val(n.inputs[1]);
        Tensor& da = touch(n.inputs[0]);
        Tensor& db = touch(n.inputs[1]);
        for (std::size_t i = 0; i < a.numel(); ++i) {
          const double d = 2.0 * (a[i] - b[i]) * g[0];
          da[i] += d;
          db[i] -= d;
        }
        break;
      }
      case OpKind::SoftmaxCrossEntropy: {
        const Tensor& probs = n.aux;
        const std::size_t rows = probs.rows(), cols = probs.cols();
        Tensor& dx = touch(n.inputs[0]);
        const double scale = g[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            double p = probs.at(r, c);
            if (static_cast<std::size_t>(n.labels[r]) == c) p -= 1.0;
            dx[r * cols + c] += p * scale;
          }
        }
        break;
      }
      case OpKind::Concat: {
        std::size_t offset = 0;
        const std::size_t rows = n.value.rows();
        const std::size_t out_cols = n.value.cols();
        for (ValueRef p : n.inputs) {
          const std::size_t cols = val(p).cols();
          Tensor& dp = touch(p);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
              dp[r * cols + c] += g[r * out_cols + offset + c];
            }
          }
          offset += cols;
        }
        break;
      }
      case OpKind::Affine: {
        const Tensor& x = val(n.inputs[0]);
        const Tensor& w = val(n.inputs[1]);
        Tensor gx = ag::matmul(g, transpose(w));
        Tensor gw = ag::matmul(transpose(x), g);
        Tensor& dx = touch(n.inputs[0]);
        Tensor& dw = touch(n.inputs[1]);
        Tensor& db = touch(n.inputs[2]);
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += gx[i];
        for (std::size_t i = 0; i < dw.numel(); ++i) dw[i] += gw[i];
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < g.cols(); ++c) db[c] += g.at(r, c);
        }
        break;
      }
    }
  }

  GradientBundle bundle;
  for (const auto& name : groups) {
    auto& dst = bundle.by_group[name];
    for (ValueRef leaf : groups_.at(name)) {
      Tensor grad = adj[leaf.index].numel() ? adj[leaf.index]
                                            : Tensor(val(leaf).shape());
      dst.emplace_back(leaf, std::move(grad));
    }
  }
  return bundle;
}

}  // namespace ag
