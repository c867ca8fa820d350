#include "calloc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cal {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument("tape: " + msg);
}

// C += A * B, all row-major. ikj ordering keeps the inner loop contiguous.
void gemm_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const int m = a.rows, k = a.cols, n = b.cols;
  for (int i = 0; i < m; ++i) {
    const float* ai = a.row_ptr(i);
    float* ci = c.row_ptr(i);
    for (int p = 0; p < k; ++p) {
      const float aip = ai[p];
      if (aip == 0.0f) continue;
      const float* bp = b.row_ptr(p);
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C += A * B^T.
void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const int m = a.rows, k = a.cols, n = b.rows;
  for (int i = 0; i < m; ++i) {
    const float* ai = a.row_ptr(i);
    float* ci = c.row_ptr(i);
    for (int j = 0; j < n; ++j) {
      const float* bj = b.row_ptr(j);
      float s = 0.0f;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

// C += A^T * B, A is (m x k), B is (m x n), C is (k x n).
void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const int m = a.rows, k = a.cols, n = b.cols;
  for (int i = 0; i < m; ++i) {
    const float* ai = a.row_ptr(i);
    const float* bi = b.row_ptr(i);
    for (int p = 0; p < k; ++p) {
      const float aip = ai[p];
      if (aip == 0.0f) continue;
      float* cp = c.row_ptr(p);
      for (int j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

}  // namespace

int Tape::check(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
    throw std::invalid_argument("tape: invalid node id");
  return id;
}

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor value, bool needs_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(value);
  n.needs_grad = needs_grad;
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Node& na = nodes_[check(a)];
  const Node& nb = nodes_[check(b)];
  require(na.val.cols == nb.val.rows, "matmul shape mismatch");
  Node n;
  n.op = Op::kMatMul;
  n.a = a;
  n.b = b;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.val = Tensor(na.val.rows, nb.val.cols);
  gemm_acc(na.val, nb.val, n.val);
  return push(std::move(n));
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  const Node& na = nodes_[check(a)];
  const Node& nb = nodes_[check(b)];
  require(na.val.cols == nb.val.cols, "matmul_nt shape mismatch");
  Node n;
  n.op = Op::kMatMulNT;
  n.a = a;
  n.b = b;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.val = Tensor(na.val.rows, nb.val.rows);
  gemm_nt_acc(na.val, nb.val, n.val);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Node& na = nodes_[check(a)];
  const Node& nb = nodes_[check(b)];
  require(na.val.same_shape(nb.val), "add shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.val = na.val;
  for (size_t i = 0; i < n.val.count(); ++i) n.val.v[i] += nb.val.v[i];
  return push(std::move(n));
}

NodeId Tape::add_bias(NodeId m, NodeId bias_row) {
  const Node& nm = nodes_[check(m)];
  const Node& nb = nodes_[check(bias_row)];
  require(nb.val.rows == 1 && nb.val.cols == nm.val.cols, "add_bias shape mismatch");
  Node n;
  n.op = Op::kAddBias;
  n.a = m;
  n.b = bias_row;
  n.needs_grad = nm.needs_grad || nb.needs_grad;
  n.val = nm.val;
  for (int r = 0; r < n.val.rows; ++r) {
    float* row = n.val.row_ptr(r);
    const float* bias = nb.val.row_ptr(0);
    for (int c = 0; c < n.val.cols; ++c) row[c] += bias[c];
  }
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  const Node& na = nodes_[check(a)];
  Node n;
  n.op = Op::kRelu;
  n.a = a;
  n.needs_grad = na.needs_grad;
  n.val = na.val;
  for (float& x : n.val.v) x = std::max(x, 0.0f);
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, float c) {
  const Node& na = nodes_[check(a)];
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.scalar = c;
  n.needs_grad = na.needs_grad;
  n.val = na.val;
  for (float& x : n.val.v) x *= c;
  return push(std::move(n));
}

NodeId Tape::row_softmax(NodeId a) {
  const Node& na = nodes_[check(a)];
  require(na.val.cols > 0, "row_softmax over empty row");
  Node n;
  n.op = Op::kRowSoftmax;
  n.a = a;
  n.needs_grad = na.needs_grad;
  n.val = Tensor(na.val.rows, na.val.cols);
  for (int r = 0; r < na.val.rows; ++r) {
    const float* in = na.val.row_ptr(r);
    float* out = n.val.row_ptr(r);
    float mx = in[0];
    for (int c = 1; c < na.val.cols; ++c) mx = std::max(mx, in[c]);
    float sum = 0.0f;
    for (int c = 0; c < na.val.cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    const float inv = 1.0f / sum;
    for (int c = 0; c < na.val.cols; ++c) out[c] *= inv;
  }
  return push(std::move(n));
}

NodeId Tape::dropout(NodeId a, float rate, bool train) {
  require(rate >= 0.0f && rate < 1.0f, "dropout rate must be in [0,1)");
  const Node& na = nodes_[check(a)];
  Node n;
  n.op = Op::kDropout;
  n.a = a;
  n.scalar = rate;
  n.needs_grad = na.needs_grad;
  if (!train || rate == 0.0f) {
    n.val = na.val;  // eval mode: identity, no mask recorded
    return push(std::move(n));
  }
  const float keep_scale = 1.0f / (1.0f - rate);
  n.aux = Tensor(na.val.rows, na.val.cols);
  n.val = Tensor(na.val.rows, na.val.cols);
  for (size_t i = 0; i < n.val.count(); ++i) {
    const bool keep = rng_.next_uniform() >= rate;
    n.aux.v[i] = keep ? keep_scale : 0.0f;
    n.val.v[i] = na.val.v[i] * n.aux.v[i];
  }
  return push(std::move(n));
}

NodeId Tape::gaussian_noise(NodeId a, float sigma, bool train) {
  require(sigma >= 0.0f, "gaussian_noise sigma must be >= 0");
  const Node& na = nodes_[check(a)];
  Node n;
  n.op = Op::kGaussianNoise;
  n.a = a;
  n.scalar = sigma;
  n.needs_grad = na.needs_grad;
  n.val = na.val;
  if (train && sigma > 0.0f) {
    for (float& x : n.val.v) x += sigma * static_cast<float>(rng_.next_normal());
  }
  // Differentiates as identity: the draw is a constant of the forward pass.
  return push(std::move(n));
}

NodeId Tape::cross_entropy(NodeId logits, const std::vector<int>& labels) {
  const Node& nl = nodes_[check(logits)];
  require(static_cast<int>(labels.size()) == nl.val.rows,
          "cross_entropy label count mismatch");
  require(nl.val.cols > 0, "cross_entropy over empty logits");
  for (int y : labels)
    require(y >= 0 && y < nl.val.cols, "cross_entropy label out of range");
  Node n;
  n.op = Op::kCrossEntropy;
  n.a = logits;
  n.labels = labels;
  n.needs_grad = nl.needs_grad;
  n.aux = Tensor(nl.val.rows, nl.val.cols);  // softmax probs, kept for backward
  double total = 0.0;
  for (int r = 0; r < nl.val.rows; ++r) {
    const float* z = nl.val.row_ptr(r);
    float* p = n.aux.row_ptr(r);
    float mx = z[0];
    for (int c = 1; c < nl.val.cols; ++c) mx = std::max(mx, z[c]);
    float sum = 0.0f;
    for (int c = 0; c < nl.val.cols; ++c) {
      p[c] = std::exp(z[c] - mx);
      sum += p[c];
    }
    const float inv = 1.0f / sum;
    for (int c = 0; c < nl.val.cols; ++c) p[c] *= inv;
    // logsumexp(z) - z[y], computed stably
    total += static_cast<double>(mx + std::log(sum) - z[labels[r]]);
  }
  n.val = Tensor(1, 1, static_cast<float>(total / nl.val.rows));
  return push(std::move(n));
}

NodeId Tape::mse(NodeId a, NodeId b) {
  const Node& na = nodes_[check(a)];
  const Node& nb = nodes_[check(b)];
  require(na.val.same_shape(nb.val), "mse shape mismatch");
  require(na.val.count() > 0, "mse over empty tensors");
  Node n;
  n.op = Op::kMse;
  n.a = a;
  n.b = b;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  double total = 0.0;
  for (size_t i = 0; i < na.val.count(); ++i) {
    const double d = static_cast<double>(na.val.v[i]) - nb.val.v[i];
    total += d * d;
  }
  n.val = Tensor(1, 1, static_cast<float>(total / na.val.count()));
  return push(std::move(n));
}

void Tape::backward(NodeId loss) {
  const int li = check(loss);
  if (backward_done_) throw std::logic_error("tape: backward already run");
  require(nodes_[li].val.rows == 1 && nodes_[li].val.cols == 1,
          "backward requires a scalar loss");
  backward_done_ = true;
  for (Node& n : nodes_) {
    if (n.needs_grad) n.grad = Tensor(n.val.rows, n.val.cols, 0.0f);
  }
  if (!nodes_[li].needs_grad) return;  // loss depends on no differentiable leaf
  nodes_[li].grad.v[0] = 1.0f;
  for (int i = li; i >= 0; --i) {
    if (nodes_[i].needs_grad && nodes_[i].op != Op::kLeaf) backward_node(i);
  }
}

void Tape::backward_node(int i) {
  Node& n = nodes_[i];
  Node* na = n.a >= 0 ? &nodes_[n.a] : nullptr;
  Node* nb = n.b >= 0 ? &nodes_[n.b] : nullptr;
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::kMatMul:
      if (na->needs_grad) gemm_nt_acc(g, nb->val, na->grad);  // dA += dC * B^T
      if (nb->needs_grad) gemm_tn_acc(na->val, g, nb->grad);  // dB += A^T * dC
      break;
    case Op::kMatMulNT:
      if (na->needs_grad) gemm_acc(g, nb->val, na->grad);     // dA += dC * B
      if (nb->needs_grad) gemm_tn_acc(g, na->val, nb->grad);  // dB += dC^T * A
      break;
    case Op::kAdd:
      if (na->needs_grad)
        for (size_t k = 0; k < g.count(); ++k) na->grad.v[k] += g.v[k];
      if (nb->needs_grad)
        for (size_t k = 0; k < g.count(); ++k) nb->grad.v[k] += g.v[k];
      break;
    case Op::kAddBias:
      if (na->needs_grad)
        for (size_t k = 0; k < g.count(); ++k) na->grad.v[k] += g.v[k];
      if (nb->needs_grad) {
        for (int r = 0; r < g.rows; ++r) {
          const float* gr = g.row_ptr(r);
          float* bg = nb->grad.row_ptr(0);
          for (int c = 0; c < g.cols; ++c) bg[c] += gr[c];
        }
      }
      break;
    case Op::kRelu:
      if (na->needs_grad) {
        // Subgradient at the kink is 0.
        for (size_t k = 0; k < g.count(); ++k)
          if (na->val.v[k] > 0.0f) na->grad.v[k] += g.v[k];
      }
      break;
    case Op::kScale:
      if (na->needs_grad)
        for (size_t k = 0; k < g.count(); ++k) na->grad.v[k] += n.scalar * g.v[k];
      break;
    case Op::kRowSoftmax:
      if (na->needs_grad) {
        for (int r = 0; r < g.rows; ++r) {
          const float* y = n.val.row_ptr(r);
          const float* gy = g.row_ptr(r);
          float* gx = na->grad.row_ptr(r);
          float dot = 0.0f;
          for (int c = 0; c < g.cols; ++c) dot += gy[c] * y[c];
          for (int c = 0; c < g.cols; ++c) gx[c] += y[c] * (gy[c] - dot);
        }
      }
      break;
    case Op::kDropout:
      if (na->needs_grad) {
        if (n.aux.count() == 0) {  // eval mode / rate 0: identity
          for (size_t k = 0; k < g.count(); ++k) na->grad.v[k] += g.v[k];
        } else {
          for (size_t k = 0; k < g.count(); ++k) na->grad.v[k] += g.v[k] * n.aux.v[k];
        }
      }
      break;
    case Op::kGaussianNoise:
      if (na->needs_grad)
        for (size_t k = 0; k < g.count(); ++k) na->grad.v[k] += g.v[k];
      break;
    case Op::kCrossEntropy:
      if (na->needs_grad) {
        const float gl = g.v[0] / n.aux.rows;
        for (int r = 0; r < n.aux.rows; ++r) {
          const float* p = n.aux.row_ptr(r);
          float* gz = na->grad.row_ptr(r);
          for (int c = 0; c < n.aux.cols; ++c) gz[c] += gl * p[c];
          gz[n.labels[r]] -= gl;
        }
      }
      break;
    case Op::kMse: {
      const float gl = 2.0f * g.v[0] / na->val.count();
      for (size_t k = 0; k < na->val.count(); ++k) {
        const float d = na->val.v[k] - nb->val.v[k];
        if (na->needs_grad) na->grad.v[k] += gl * d;
        if (nb->needs_grad) nb->grad.v[k] -= gl * d;
      }
      break;
    }
    case Op::kLeaf:
      break;
  }
}

const Tensor& Tape::grad(NodeId id) const {
  const Node& n = nodes_[check(id)];
  if (!backward_done_) throw std::logic_error("tape: grad() before backward()");
  if (!n.needs_grad)
    throw std::invalid_argument("tape: node was not flagged needs_grad");
  return n.grad;
}

}  // namespace cal
