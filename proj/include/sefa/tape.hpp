#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sefa/errors.hpp"
#include "sefa/tensor.hpp"

namespace sefa {

// Reverse-mode automatic differentiation over a flat tape.
//
// The primitive set is exactly what least-squares flow-matching training
// needs: matmul, elementwise add, row-broadcast add (bias), scale by a
// constant, tanh, and sum-of-squares reduction. Nodes are appended in
// execution order, so parents always precede children and the backward pass
// is a single reverse sweep.
class Tape {
 public:
  using NodeId = int;

  enum class Op { input, matmul, add, add_row, scale, tanh_fn, sum_squares };

  NodeId input(TensorBuffer value) {
    return push(Op::input, -1, -1, 0.0, std::move(value));
  }

  // [n,k] x [k,m] -> [n,m]
  NodeId matmul(NodeId a, NodeId b) {
    const TensorBuffer& va = value(a);
    const TensorBuffer& vb = value(b);
    if (va.shape.size() != 2 || vb.shape.size() != 2 || va.shape[1] != vb.shape[0]) {
      throw InvalidArgumentError("matmul: incompatible shapes " + shape_str(va.shape) +
                                 " x " + shape_str(vb.shape));
    }
    TensorBuffer out({va.shape[0], vb.shape[1]});
    mm(out.data.data(), va.data.data(), vb.data.data(), va.shape[0], va.shape[1],
       vb.shape[1]);
    return push(Op::matmul, a, b, 0.0, std::move(out));
  }

  NodeId add(NodeId a, NodeId b) {
    const TensorBuffer& va = value(a);
    const TensorBuffer& vb = value(b);
    if (!same_shape(va, vb)) {
      throw InvalidArgumentError("add: shape mismatch " + shape_str(va.shape) + " vs " +
                                 shape_str(vb.shape));
    }
    TensorBuffer out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
    return push(Op::add, a, b, 0.0, std::move(out));
  }

  // [n,m] + [m] with the vector broadcast across rows (bias add).
  NodeId add_row(NodeId a, NodeId b) {
    const TensorBuffer& va = value(a);
    const TensorBuffer& vb = value(b);
    if (va.shape.size() != 2 || vb.numel() != va.shape[1]) {
      throw InvalidArgumentError("add_row: cannot broadcast " + shape_str(vb.shape) +
                                 " across rows of " + shape_str(va.shape));
    }
    TensorBuffer out = va;
    const int n = va.shape[0], m = va.shape[1];
    for (int i = 0; i < n; ++i) {
      double* row = out.data.data() + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) row[j] += vb.data[j];
    }
    return push(Op::add_row, a, b, 0.0, std::move(out));
  }

  NodeId scale(NodeId a, double alpha) {
    TensorBuffer out = value(a);
    for (double& v : out.data) v *= alpha;
    return push(Op::scale, a, -1, alpha, std::move(out));
  }

  NodeId tanh_fn(NodeId a) {
    TensorBuffer out = value(a);
    for (double& v : out.data) v = std::tanh(v);
    return push(Op::tanh_fn, a, -1, 0.0, std::move(out));
  }

  NodeId sum_squares(NodeId a) {
    const TensorBuffer& va = value(a);
    double s = 0.0;
    for (double v : va.data) s += v * v;
    return push(Op::sum_squares, a, -1, 0.0, TensorBuffer({1}, {s}));
  }

  const TensorBuffer& value(NodeId id) const { return nodes_[check(id)].value; }

  // Adjoint of `id` after backward(); zero tensor if the node is unreachable
  // from the output.
  const TensorBuffer& grad(NodeId id) const { return nodes_[check(id)].grad; }

  void backward(NodeId output) {
    Node& out = nodes_[check(output)];
    if (!out.value.is_scalar()) {
      throw InvalidArgumentError("backward: output node must be scalar, has shape " +
                                 shape_str(out.value.shape));
    }
    for (Node& n : nodes_) {
      n.grad = TensorBuffer(n.value.shape);
    }
    out.grad.data[0] = 1.0;
    for (int i = output; i >= 0; --i) {
      accumulate(nodes_[i]);
    }
  }

  int size() const { return static_cast<int>(nodes_.size()); }

  void reset() { nodes_.clear(); }

 private:
  struct Node {
    Op op;
    NodeId a, b;
    double alpha;
    TensorBuffer value;
    TensorBuffer grad;
  };

  NodeId check(NodeId id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) {
      throw InvalidArgumentError("tape: node id " + std::to_string(id) +
                                 " out of range");
    }
    return id;
  }

  NodeId push(Op op, NodeId a, NodeId b, double alpha, TensorBuffer value) {
    nodes_.push_back(Node{op, a, b, alpha, std::move(value), TensorBuffer()});
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  void accumulate(Node& n) {
    const TensorBuffer& g = n.grad;
    switch (n.op) {
      case Op::input:
        break;
      case Op::matmul: {
        Node& na = nodes_[n.a];
        Node& nb = nodes_[n.b];
        const int rows = na.value.shape[0], inner = na.value.shape[1],
                  cols = nb.value.shape[1];
        mm_acc_abt(na.grad.data.data(), g.data.data(), nb.value.data.data(), rows,
                   cols, inner);
        mm_acc_atb(nb.grad.data.data(), na.value.data.data(), g.data.data(), rows,
                   inner, cols);
        break;
      }
      case Op::add: {
        Node& na = nodes_[n.a];
        Node& nb = nodes_[n.b];
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          na.grad.data[i] += g.data[i];
          nb.grad.data[i] += g.data[i];
        }
        break;
      }
      case Op::add_row: {
        Node& na = nodes_[n.a];
        Node& nb = nodes_[n.b];
        const int rows = na.value.shape[0], cols = na.value.shape[1];
        for (int i = 0; i < rows; ++i) {
          const double* grow = g.data.data() + static_cast<std::size_t>(i) * cols;
          double* arow = na.grad.data.data() + static_cast<std::size_t>(i) * cols;
          for (int j = 0; j < cols; ++j) {
            arow[j] += grow[j];
            nb.grad.data[j] += grow[j];
          }
        }
        break;
      }
      case Op::scale: {
        Node& na = nodes_[n.a];
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          na.grad.data[i] += n.alpha * g.data[i];
        }
        break;
      }
      case Op::tanh_fn: {
        Node& na = nodes_[n.a];
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          const double y = n.value.data[i];
          na.grad.data[i] += (1.0 - y * y) * g.data[i];
        }
        break;
      }
      case Op::sum_squares: {
        Node& na = nodes_[n.a];
        const double g0 = g.data[0];
        for (std::size_t i = 0; i < na.grad.data.size(); ++i) {
          na.grad.data[i] += 2.0 * na.value.data[i] * g0;
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace sefa
