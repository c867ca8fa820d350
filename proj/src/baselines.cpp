#include "calloc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "calloc/attacks.hpp"
#include "calloc/tape.hpp"
#include "calloc/trainer.hpp"

namespace cal {

KnnLocalizer::KnnLocalizer(const LabeledMatrix& train, int k)
    : train_x_(train.x), labels_(train.labels), k_(k) {
  if (train_x_.rows == 0) throw std::runtime_error("knn: empty train set");
  if (k_ < 1 || k_ > train_x_.rows) throw std::runtime_error("knn: k out of range");
}

int KnnLocalizer::predict_one(const float* row) const {
  struct Neighbor {
    float d2;
    int idx;
  };
  std::vector<Neighbor> nb(static_cast<size_t>(train_x_.rows));
  for (int r = 0; r < train_x_.rows; ++r) {
    const float* t = train_x_.row_ptr(r);
    float d2 = 0.0f;
    for (int c = 0; c < train_x_.cols; ++c) {
      float d = row[c] - t[c];
      d2 += d * d;
    }
    nb[static_cast<size_t>(r)] = {d2, r};
  }
  // Distance ties resolve by train-row index so results are order-independent.
  std::partial_sort(nb.begin(), nb.begin() + k_, nb.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.d2 != b.d2 ? a.d2 < b.d2 : a.idx < b.idx;
  });

  // Count votes and remember each label's closest representative.
  std::vector<int> votes;
  std::vector<float> best_d2;
  std::vector<int> label_of;
  for (int i = 0; i < k_; ++i) {
    int lab = labels_[static_cast<size_t>(nb[static_cast<size_t>(i)].idx)];
    size_t slot = 0;
    for (; slot < label_of.size(); ++slot) {
      if (label_of[slot] == lab) break;
    }
    if (slot == label_of.size()) {
      label_of.push_back(lab);
      votes.push_back(0);
      best_d2.push_back(nb[static_cast<size_t>(i)].d2);
    }
    ++votes[slot];
    best_d2[slot] = std::min(best_d2[slot], nb[static_cast<size_t>(i)].d2);
  }

  size_t winner = 0;
  for (size_t s = 1; s < label_of.size(); ++s) {
    if (votes[s] > votes[winner] ||
        (votes[s] == votes[winner] && best_d2[s] < best_d2[winner])) {
      winner = s;
    }
  }
  return label_of[winner];
}

std::vector<int> KnnLocalizer::predict(const Tensor& x) const {
  if (x.cols != train_x_.cols) throw std::runtime_error("knn: query width mismatch");
  std::vector<int> out(static_cast<size_t>(x.rows));
  for (int r = 0; r < x.rows; ++r) out[static_cast<size_t>(r)] = predict_one(x.row_ptr(r));
  return out;
}

Tensor KnnLocalizer::input_gradient(const Tensor&, const std::vector<int>&) const {
  throw std::runtime_error(
      "knn has no input gradient; craft against a surrogate victim instead");
}

void DnnTrainConfig::validate() const {
  if (learning_rate <= 0.0f) throw std::runtime_error("dnn config: learning_rate must be > 0");
  if (epochs < 1) throw std::runtime_error("dnn config: epochs must be >= 1");
  if (batch_size < 1) throw std::runtime_error("dnn config: batch_size must be >= 1");
  if (fgsm_augment && augment_epsilon < 0.0f) {
    throw std::runtime_error("dnn config: augment_epsilon must be >= 0");
  }
}

namespace {

DenseLayer glorot(int n_in, int n_out, RngStream rng) {
  DenseLayer l;
  l.w = Tensor(n_in, n_out);
  l.b = Tensor(1, n_out);
  const float limit = std::sqrt(6.0f / static_cast<float>(n_in + n_out));
  for (float& w : l.w.v) {
    w = (2.0f * static_cast<float>(rng.next_uniform()) - 1.0f) * limit;
  }
  return l;
}

}  // namespace

DnnLocalizer::DnnLocalizer(int n_in, int n_classes, uint64_t seed, std::string name)
    : name_(std::move(name)) {
  if (n_in <= 0 || n_classes <= 0) throw std::runtime_error("dnn: dimensions must be positive");
  RngStream root(seed);
  l1 = glorot(n_in, kHidden, root.derive(21));
  l2 = glorot(kHidden, kHidden, root.derive(22));
  l3 = glorot(kHidden, n_classes, root.derive(23));
}

namespace {

struct DnnGraph {
  NodeId logits = -1;
  std::vector<NodeId> params;  // w1,b1,w2,b2,w3,b3
};

DnnGraph build_dnn(Tape& t, const DnnLocalizer& net, NodeId x, bool params_need_grad) {
  DnnGraph g;
  auto layer = [&](NodeId in, const DenseLayer& l, bool relu_after) {
    NodeId w = t.leaf(l.w, params_need_grad);
    NodeId b = t.leaf(l.b, params_need_grad);
    g.params.push_back(w);
    g.params.push_back(b);
    NodeId out = t.add_bias(t.matmul(in, w), b);
    return relu_after ? t.relu(out) : out;
  };
  NodeId h = layer(x, net.l1, true);
  h = layer(h, net.l2, true);
  g.logits = layer(h, net.l3, false);
  return g;
}

}  // namespace

Tensor DnnLocalizer::logits(const Tensor& x) const {
  Tape t;
  DnnGraph g = build_dnn(t, *this, t.leaf(x, false), false);
  return t.value(g.logits);
}

std::vector<int> DnnLocalizer::predict(const Tensor& x) const {
  Tensor z = logits(x);
  std::vector<int> out(static_cast<size_t>(z.rows));
  for (int r = 0; r < z.rows; ++r) {
    const float* row = z.row_ptr(r);
    out[static_cast<size_t>(r)] =
        static_cast<int>(std::max_element(row, row + z.cols) - row);
  }
  return out;
}

Tensor DnnLocalizer::input_gradient(const Tensor& x, const std::vector<int>& labels) const {
  Tape t;
  NodeId xin = t.leaf(x, true);
  DnnGraph g = build_dnn(t, *this, xin, false);
  t.backward(t.cross_entropy(g.logits, labels));
  return t.grad(xin);
}

double DnnLocalizer::mean_ce(const LabeledMatrix& data) const {
  Tape t;
  DnnGraph g = build_dnn(t, *this, t.leaf(data.x, false), false);
  return static_cast<double>(t.value(t.cross_entropy(g.logits, data.labels)).v[0]);
}

void DnnLocalizer::train(const LabeledMatrix& train, const DnnTrainConfig& cfg) {
  cfg.validate();
  std::vector<Tensor*> params{&l1.w, &l1.b, &l2.w, &l2.b, &l3.w, &l3.b};
  AdamOptimizer opt(params, cfg.learning_rate);
  RngStream root(cfg.seed);

  const int n_clean = train.x.rows;
  APMask full_mask = APMask::all(train.x.cols, true);
  InputGradFn grad = [this](const Tensor& x, const std::vector<int>& labels) {
    return input_gradient(x, labels);
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Assemble this epoch's training pool; with augmentation it is the clean
    // set plus an equal-sized FGSM copy crafted against current weights.
    Tensor pool_x = train.x;
    std::vector<int> pool_y = train.labels;
    if (cfg.fgsm_augment) {
      Tensor adv = craft_fgsm(grad, train.x, train.labels, cfg.augment_epsilon, full_mask);
      Tensor both(n_clean * 2, train.x.cols);
      std::copy(pool_x.v.begin(), pool_x.v.end(), both.v.begin());
      std::copy(adv.v.begin(), adv.v.end(), both.v.begin() + pool_x.v.size());
      pool_x = std::move(both);
      pool_y.insert(pool_y.end(), train.labels.begin(), train.labels.end());
    }

    const int n = pool_x.rows;
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng = root.derive(static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    for (int start = 0; start < n; start += cfg.batch_size) {
      const int rows = std::min(cfg.batch_size, n - start);
      Tensor xb(rows, pool_x.cols);
      std::vector<int> yb(static_cast<size_t>(rows));
      for (int i = 0; i < rows; ++i) {
        int src = order[static_cast<size_t>(start + i)];
        std::copy_n(pool_x.row_ptr(src), pool_x.cols, xb.row_ptr(i));
        yb[static_cast<size_t>(i)] = pool_y[static_cast<size_t>(src)];
      }

      Tape t;
      DnnGraph g = build_dnn(t, *this, t.leaf(xb, false), true);
      NodeId loss = t.cross_entropy(g.logits, yb);
      t.backward(loss);
      if (!std::isfinite(t.value(loss).v[0])) {
        throw std::runtime_error("dnn training diverged to a non-finite loss at epoch " +
                                 std::to_string(epoch));
      }
      std::vector<const Tensor*> grads;
      for (NodeId id : g.params) grads.push_back(&t.grad(id));
      opt.step(grads);
    }
  }
}

}  // namespace cal
