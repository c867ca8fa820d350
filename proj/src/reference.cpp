#include "calloc/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cal {

namespace {

struct DMat {
  int rows = 0, cols = 0;
  std::vector<double> v;
  DMat() = default;
  DMat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

DMat widen(const Tensor& t) {
  DMat m(t.rows, t.cols);
  for (size_t i = 0; i < t.v.size(); ++i) m.v[i] = static_cast<double>(t.v[i]);
  return m;
}

DMat dense(const DMat& x, const DenseLayer& l) {
  if (x.cols != l.w.rows) throw std::runtime_error("reference dense: shape mismatch");
  DMat out(x.rows, l.w.cols);
  for (int r = 0; r < x.rows; ++r) {
    for (int k = 0; k < x.cols; ++k) {
      double xv = x.at(r, k);
      for (int c = 0; c < l.w.cols; ++c) {
        out.at(r, c) += xv * static_cast<double>(l.w.at(k, c));
      }
    }
    for (int c = 0; c < l.w.cols; ++c) out.at(r, c) += static_cast<double>(l.b.at(0, c));
  }
  return out;
}

DMat relu(DMat m) {
  for (double& x : m.v) x = std::max(x, 0.0);
  return m;
}

DMat matmul_nt(const DMat& a, const DMat& b) {
  if (a.cols != b.cols) throw std::runtime_error("reference matmul_nt: shape mismatch");
  DMat out(a.rows, b.rows);
  for (int r = 0; r < a.rows; ++r) {
    for (int c = 0; c < b.rows; ++c) {
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += a.at(r, k) * b.at(c, k);
      out.at(r, c) = s;
    }
  }
  return out;
}

DMat matmul(const DMat& a, const DMat& b) {
  if (a.cols != b.rows) throw std::runtime_error("reference matmul: shape mismatch");
  DMat out(a.rows, b.cols);
  for (int r = 0; r < a.rows; ++r) {
    for (int k = 0; k < a.cols; ++k) {
      double av = a.at(r, k);
      for (int c = 0; c < b.cols; ++c) out.at(r, c) += av * b.at(k, c);
    }
  }
  return out;
}

DMat row_softmax(const DMat& m) {
  DMat out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    double mx = m.at(r, 0);
    for (int c = 1; c < m.cols; ++c) mx = std::max(mx, m.at(r, c));
    double sum = 0.0;
    for (int c = 0; c < m.cols; ++c) {
      out.at(r, c) = std::exp(m.at(r, c) - mx);
      sum += out.at(r, c);
    }
    for (int c = 0; c < m.cols; ++c) out.at(r, c) /= sum;
  }
  return out;
}

double cross_entropy(const DMat& logits, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != logits.rows) {
    throw std::runtime_error("reference cross_entropy: label count mismatch");
  }
  double total = 0.0;
  for (int r = 0; r < logits.rows; ++r) {
    double mx = logits.at(r, 0);
    for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, logits.at(r, c));
    double sum = 0.0;
    for (int c = 0; c < logits.cols; ++c) sum += std::exp(logits.at(r, c) - mx);
    total += mx + std::log(sum) - logits.at(r, labels[static_cast<size_t>(r)]);
  }
  return total / logits.rows;
}

double mse(const DMat& a, const DMat& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw std::runtime_error("reference mse: shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    double d = a.v[i] - b.v[i];
    s += d * d;
  }
  return s / static_cast<double>(a.v.size());
}

}  // namespace

double reference_calloc_loss(const CallocModel& model, const Tensor& x_in, const Tensor& x_clean,
                             const std::vector<int>& labels, float lambda) {
  const AnchorMemory& mem = model.memory();
  if (mem.empty()) throw std::runtime_error("reference_calloc_loss: empty anchor memory");

  DMat hq = relu(dense(widen(x_in), model.emb_query));
  DMat q = dense(hq, model.proj_q);
  DMat k = dense(widen(mem.keys), model.proj_k);
  DMat scores = matmul_nt(q, k);
  double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(model.dims().key_dim));
  for (double& s : scores.v) s *= inv_sqrt_dk;
  DMat mixed = matmul(row_softmax(scores), widen(mem.values));
  DMat logits = dense(mixed, model.head);

  double loss = cross_entropy(logits, labels);
  if (lambda != 0.0f) {
    DMat ho = relu(dense(widen(x_clean), model.emb_original));
    loss += static_cast<double>(lambda) * mse(hq, ho);
  }
  return loss;
}

double reference_mlp_ce(const std::vector<const DenseLayer*>& layers, const Tensor& x,
                        const std::vector<int>& labels) {
  DMat h = widen(x);
  for (size_t i = 0; i < layers.size(); ++i) {
    h = dense(h, *layers[i]);
    if (i + 1 < layers.size()) h = relu(std::move(h));
  }
  return cross_entropy(h, labels);
}

}  // namespace cal
