#include "calloc/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace cal {

namespace {

// Stream ids for per-layer init substreams; stable so checkpoints written by
// one build reproduce bit-identically on another.
enum : uint64_t {
  kStreamEmbQuery = 11,
  kStreamEmbOriginal = 12,
  kStreamProjQ = 13,
  kStreamProjK = 14,
  kStreamHead = 15,
};

DenseLayer glorot_dense(int n_in, int n_out, RngStream rng, float gain = 1.0f) {
  DenseLayer l;
  l.w = Tensor(n_in, n_out);
  l.b = Tensor(1, n_out);  // zero-initialized
  const float limit = gain * std::sqrt(6.0f / static_cast<float>(n_in + n_out));
  for (float& w : l.w.v) {
    w = (2.0f * static_cast<float>(rng.next_uniform()) - 1.0f) * limit;
  }
  return l;
}

// Plain Glorot on the Q/K projections leaves the scaled dot products with a
// spread of ~1e-2, so the softmax over hundreds of anchors starts out flat
// and the classification gradient through it is orders of magnitude weaker
// than the alignment term's. Training then collapses the embeddings into the
// alignment loss's trivial zero minimum and the model degenerates to a
// constant predictor. Scaling the projection init so the attention logits
// start with roughly unit variance keeps the attention discriminative from
// the first step. 7^2 * 1e-2 lands the logit spread near 1 for the layer
// widths used here.
constexpr float kProjInitGain = 7.0f;

// The head starts as a scaled identity: the attention output is already a
// class distribution, so reading it off directly (and letting training refine
// the mixing) converges far faster than a random C x C mix.
constexpr float kHeadInitScale = 8.0f;

// Trainable-order slot of a layer's weight leaf; bias goes in slot + 1.
enum : int {
  kSlotEmbQuery = 0,
  kSlotEmbOriginal = 2,
  kSlotProjQ = 4,
  kSlotProjK = 6,
  kSlotHead = 8,
};

NodeId dense(Tape& t, NodeId x, const DenseLayer& l, int slot, CallocModel::ParamLeaves* reg) {
  bool pg = reg != nullptr && reg->needs_grad;
  NodeId w = t.leaf(l.w, pg);
  NodeId b = t.leaf(l.b, pg);
  if (reg != nullptr) {
    reg->slots[static_cast<size_t>(slot)] = w;
    reg->slots[static_cast<size_t>(slot) + 1] = b;
  }
  return t.add_bias(t.matmul(x, w), b);
}

}  // namespace

Tensor one_hot(const std::vector<int>& labels, int n_classes) {
  Tensor out(static_cast<int>(labels.size()), n_classes);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) {
      throw std::runtime_error("one_hot: label out of range");
    }
    out.at(static_cast<int>(i), labels[i]) = 1.0f;
  }
  return out;
}

CallocModel CallocModel::init(ModelDims dims, uint64_t seed) {
  if (dims.n_in <= 0 || dims.emb_dim <= 0 || dims.key_dim <= 0 || dims.n_classes <= 0) {
    throw std::runtime_error("CallocModel::init: all dimensions must be positive");
  }
  CallocModel m;
  m.dims_ = dims;
  m.seed_ = seed;
  RngStream root(seed);
  m.emb_query = glorot_dense(dims.n_in, dims.emb_dim, root.derive(kStreamEmbQuery));
  m.emb_original = glorot_dense(dims.n_in, dims.emb_dim, root.derive(kStreamEmbOriginal));
  m.proj_q = glorot_dense(dims.emb_dim, dims.key_dim, root.derive(kStreamProjQ), kProjInitGain);
  m.proj_k = glorot_dense(dims.emb_dim, dims.key_dim, root.derive(kStreamProjK), kProjInitGain);
  m.head = glorot_dense(dims.n_classes, dims.n_classes, root.derive(kStreamHead));
  return m;
}

NodeId CallocModel::build_query_embedding(Tape& t, NodeId x, bool /*train*/, ParamLeaves* reg) const {
  // The query path is regularizer-free in both modes; perturbed inputs must
  // map through the same function the anchor queries were trained against.
  return t.relu(dense(t, x, emb_query, kSlotEmbQuery, reg));
}

NodeId CallocModel::build_original_embedding(Tape& t, NodeId x, bool train, ParamLeaves* reg) const {
  NodeId h = t.relu(dense(t, x, emb_original, kSlotEmbOriginal, reg));
  h = t.dropout(h, kDropoutRate, train);
  return t.gaussian_noise(h, kNoiseSigma, train);
}

NodeId CallocModel::build_logits(Tape& t, NodeId query_embedding, const AnchorMemory& memory,
                                 ParamLeaves* reg, NodeId* attn_out) const {
  if (memory.empty()) {
    throw std::runtime_error("CallocModel: anchor memory is empty; call rebuild_anchor_memory first");
  }
  NodeId q = dense(t, query_embedding, proj_q, kSlotProjQ, reg);  // rows x key_dim
  NodeId mem_keys = t.leaf(memory.keys, false);                   // N x emb_dim
  NodeId k = dense(t, mem_keys, proj_k, kSlotProjK, reg);         // N x key_dim
  NodeId scores = t.matmul_nt(q, k);                              // rows x N
  scores = t.scale(scores, 1.0f / std::sqrt(static_cast<float>(dims_.key_dim)));
  NodeId attn = t.row_softmax(scores);
  if (attn_out != nullptr) *attn_out = attn;
  NodeId mem_values = t.leaf(memory.values, false);               // N x C
  NodeId mixed = t.matmul(attn, mem_values);                      // rows x C
  return dense(t, mixed, head, kSlotHead, reg);
}

CallocModel::LossNodes CallocModel::build_training_loss(Tape& t, const Tensor& x_in,
                                                        const Tensor& x_clean,
                                                        const std::vector<int>& labels,
                                                        float lambda, const AnchorMemory& memory,
                                                        bool train, bool input_needs_grad,
                                                        bool params_need_grad) const {
  LossNodes out;
  out.params.needs_grad = params_need_grad;
  out.x_in = t.leaf(x_in, input_needs_grad);
  NodeId hq = build_query_embedding(t, out.x_in, train, &out.params);
  out.logits = build_logits(t, hq, memory, &out.params);
  out.ce = t.cross_entropy(out.logits, labels);
  out.total = out.ce;
  if (lambda != 0.0f) {
    NodeId xc = t.leaf(x_clean, false);
    NodeId ho = build_original_embedding(t, xc, train, &out.params);
    out.align_mse = t.mse(hq, ho);
    out.total = t.add(out.ce, t.scale(out.align_mse, lambda));
  }
  return out;
}

Tensor CallocModel::embed_original(const Tensor& x, bool train, RngStream rng) const {
  Tape t(rng);
  NodeId id = build_original_embedding(t, t.leaf(x, false), train);
  return t.value(id);
}

Tensor CallocModel::embed_query(const Tensor& x) const {
  Tape t;
  NodeId id = build_query_embedding(t, t.leaf(x, false), false);
  return t.value(id);
}

Tensor CallocModel::forward_logits(const Tensor& x) const {
  Tape t;
  NodeId hq = build_query_embedding(t, t.leaf(x, false), false);
  return t.value(build_logits(t, hq, memory_));
}

Tensor CallocModel::attention_weights(const Tensor& x) const {
  Tape t;
  NodeId hq = build_query_embedding(t, t.leaf(x, false), false);
  NodeId attn = -1;
  build_logits(t, hq, memory_, nullptr, &attn);
  return t.value(attn);
}

std::vector<int> CallocModel::predict(const Tensor& x) const {
  Tensor logits = forward_logits(x);
  std::vector<int> out(static_cast<size_t>(logits.rows));
  for (int r = 0; r < logits.rows; ++r) {
    const float* row = logits.row_ptr(r);
    int best = 0;
    for (int c = 1; c < logits.cols; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[static_cast<size_t>(r)] = best;
  }
  return out;
}

Tensor CallocModel::input_gradient(const Tensor& x, const std::vector<int>& labels) const {
  Tape t;
  NodeId xin = t.leaf(x, true);
  NodeId hq = build_query_embedding(t, xin, false);
  NodeId logits = build_logits(t, hq, memory_);
  NodeId ce = t.cross_entropy(logits, labels);
  t.backward(ce);
  return t.grad(xin);
}

void CallocModel::rebuild_anchor_memory(const LabeledMatrix& train_data) {
  if (train_data.x.cols != dims_.n_in) {
    throw std::runtime_error("rebuild_anchor_memory: training matrix width != n_in");
  }
  memory_.keys = embed_original(train_data.x, /*train=*/false);
  memory_.values = one_hot(train_data.labels, dims_.n_classes);
}

ParamCountReport CallocModel::param_count() const {
  ParamCountReport r;
  auto layer = [&](const char* name, const DenseLayer& l) {
    r.per_layer.emplace_back(name, l.param_count());
    return l.param_count();
  };
  r.embedding_total = layer("emb_query", emb_query) + layer("emb_original", emb_original);
  r.attention_total = layer("proj_q", proj_q) + layer("proj_k", proj_k);
  r.classifier_total = layer("head", head);
  r.total = r.embedding_total + r.attention_total + r.classifier_total;
  return r;
}

std::vector<Tensor*> CallocModel::trainable() {
  return {&emb_query.w, &emb_query.b, &emb_original.w, &emb_original.b,
          &proj_q.w,    &proj_q.b,    &proj_k.w,       &proj_k.b,
          &head.w,      &head.b};
}

std::vector<const Tensor*> CallocModel::trainable() const {
  auto mutable_list = const_cast<CallocModel*>(this)->trainable();
  return std::vector<const Tensor*>(mutable_list.begin(), mutable_list.end());
}

std::vector<float> CallocModel::flatten_params() const {
  std::vector<float> flat;
  for (const Tensor* t : trainable()) {
    flat.insert(flat.end(), t->v.begin(), t->v.end());
  }
  return flat;
}

void CallocModel::unflatten_params(const std::vector<float>& flat) {
  size_t off = 0;
  for (Tensor* t : trainable()) {
    if (off + t->v.size() > flat.size()) {
      throw std::runtime_error("unflatten_params: flat vector too short");
    }
    std::memcpy(t->v.data(), flat.data() + off, t->v.size() * sizeof(float));
    off += t->v.size();
  }
  if (off != flat.size()) {
    throw std::runtime_error("unflatten_params: flat vector size mismatch");
  }
}

}  // namespace cal
