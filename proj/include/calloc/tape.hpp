#pragma once

#include <vector>

#include "calloc/rng.hpp"
#include "calloc/tensor.hpp"

namespace cal {

using NodeId = int;

// Reverse-mode autodiff over a per-batch tape of dense ops.
//
// Nodes are appended in execution order, which is also a topological order,
// so backward() is a single reverse sweep. Gradients accumulate additively
// when a node fans out into several consumers. Leaves flagged needs_grad
// (parameters, or inputs under attack crafting) receive gradients; everything
// reachable only from constant leaves is skipped during the sweep.
//
// dropout/gaussian_noise consume the tape's RngStream in training mode and
// are identities in eval mode. A tape is single-threaded; concurrent callers
// each own their own tape.
class Tape {
 public:
  explicit Tape(RngStream rng = RngStream(0)) : rng_(rng) {}

  NodeId leaf(Tensor value, bool needs_grad);

  NodeId matmul(NodeId a, NodeId b);     // (m x k)(k x n) -> m x n
  NodeId matmul_nt(NodeId a, NodeId b);  // a * b^T, (m x k)(n x k) -> m x n
  NodeId add(NodeId a, NodeId b);        // elementwise, same shape
  NodeId add_bias(NodeId m, NodeId bias_row);  // bias row broadcast over rows
  NodeId relu(NodeId a);
  NodeId scale(NodeId a, float c);
  NodeId row_softmax(NodeId a);
  NodeId dropout(NodeId a, float rate, bool train);
  NodeId gaussian_noise(NodeId a, float sigma, bool train);
  // Mean over rows of logsumexp(z) - z[label]; scalar output.
  NodeId cross_entropy(NodeId logits, const std::vector<int>& labels);
  NodeId mse(NodeId a, NodeId b);  // mean squared difference; scalar output

  const Tensor& value(NodeId id) const { return nodes_[check(id)].val; }

  // Runs the reverse sweep from a scalar loss node. May be called once per tape.
  void backward(NodeId loss);

  // Gradient of the loss w.r.t. a needs_grad node; valid after backward().
  const Tensor& grad(NodeId id) const;

  size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    kLeaf,
    kMatMul,
    kMatMulNT,
    kAdd,
    kAddBias,
    kRelu,
    kScale,
    kRowSoftmax,
    kDropout,
    kGaussianNoise,
    kCrossEntropy,
    kMse,
  };

  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
    float scalar = 0.0f;       // scale factor / dropout rate / noise sigma
    Tensor aux;                // dropout mask, softmax probs for CE
    std::vector<int> labels;   // cross-entropy targets
  };

  NodeId push(Node n);
  int check(NodeId id) const;
  void backward_node(int i);

  std::vector<Node> nodes_;
  RngStream rng_;
  bool backward_done_ = false;
};

}  // namespace cal
