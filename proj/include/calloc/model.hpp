#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "calloc/dataset.hpp"
#include "calloc/tape.hpp"
#include "calloc/tensor.hpp"

namespace cal {

struct DenseLayer {
  Tensor w;  // n_in x n_out
  Tensor b;  // 1 x n_out

  int param_count() const { return w.rows * w.cols + b.cols; }
};

// Cached attention memory over the training set: keys are eval-mode
// original-path embeddings (N x emb_dim, no dropout/noise applied at caching
// time), values are one-hot reference-point labels (N x C). Rebuilt whenever
// embedding parameters change.
struct AnchorMemory {
  Tensor keys;
  Tensor values;

  bool empty() const { return keys.rows == 0; }
  int rows() const { return keys.rows; }
};

struct ModelDims {
  int n_in = 0;
  int emb_dim = 128;
  int key_dim = 64;
  int n_classes = 0;
};

// The configuration whose layer sizes the deployment figures are quoted for.
inline ModelDims reference_dims() { return ModelDims{165, 128, 64, 61}; }

struct ParamCountReport {
  std::vector<std::pair<std::string, int>> per_layer;
  int embedding_total = 0;
  int attention_total = 0;
  int classifier_total = 0;
  int total = 0;
};

// Dual-embedding attention localizer.
//
// Two dense+relu embedding networks map an rss vector to a 128-wide
// hyperspace: the query path embeds the (possibly perturbed) input, the
// original path embeds clean data and adds dropout(0.2) + Gaussian noise(0.32)
// in training mode. Inference attends the query embedding against the cached
// anchor memory, Softmax(QK^T/sqrt(d_k))V with linear Q/K projections to
// key_dim, and a C->C dense head maps the attention output to class logits.
class CallocModel {
 public:
  CallocModel() = default;
  static CallocModel init(ModelDims dims, uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  uint64_t seed() const { return seed_; }
  int lesson_reached() const { return lesson_reached_; }
  void set_lesson_reached(int lesson) { lesson_reached_ = lesson; }

  // Registry mapping parameter tensors to their tape leaves for one forward
  // build. Slots follow trainable() order; -1 marks a layer that was not used
  // in the build (its gradient is zero).
  struct ParamLeaves {
    std::vector<NodeId> slots = std::vector<NodeId>(10, -1);
    bool needs_grad = false;
  };

  // Tape builders. x is a batch of normalized fingerprints (rows x n_in).
  // Passing a ParamLeaves records each parameter's leaf id so callers can
  // fetch gradients after backward(); without one, parameters are constants.
  NodeId build_query_embedding(Tape& t, NodeId x, bool train, ParamLeaves* reg = nullptr) const;
  NodeId build_original_embedding(Tape& t, NodeId x, bool train, ParamLeaves* reg = nullptr) const;
  // Attention + head over an explicit memory; returns the logits node.
  // attn_out, when given, receives the softmaxed attention-weight node.
  NodeId build_logits(Tape& t, NodeId query_embedding, const AnchorMemory& memory,
                      ParamLeaves* reg = nullptr, NodeId* attn_out = nullptr) const;

  // Loss = cross_entropy(logits, labels) + lambda * mse(H_query(x_in), H_orig(x_clean)).
  struct LossNodes {
    NodeId x_in = -1;
    NodeId logits = -1;
    NodeId ce = -1;
    NodeId align_mse = -1;  // -1 when lambda == 0
    NodeId total = -1;
    ParamLeaves params;
  };
  LossNodes build_training_loss(Tape& t, const Tensor& x_in, const Tensor& x_clean,
                                const std::vector<int>& labels, float lambda,
                                const AnchorMemory& memory, bool train, bool input_needs_grad,
                                bool params_need_grad = false) const;

  // Eval-mode helpers (deterministic, shareable across threads).
  Tensor embed_original(const Tensor& x, bool train, RngStream rng = RngStream(0)) const;
  Tensor embed_query(const Tensor& x) const;
  Tensor forward_logits(const Tensor& x) const;  // uses the cached memory
  // Softmax(QK^T/sqrt(d_k)) rows over the cached memory (diagnostics).
  Tensor attention_weights(const Tensor& x) const;
  std::vector<int> predict(const Tensor& x) const;
  // d(cross_entropy)/d(input), eval-mode forward.
  Tensor input_gradient(const Tensor& x, const std::vector<int>& labels) const;

  void rebuild_anchor_memory(const LabeledMatrix& train_data);
  const AnchorMemory& memory() const { return memory_; }
  void set_memory(AnchorMemory m) { memory_ = std::move(m); }

  ParamCountReport param_count() const;

  // Trainable tensors in checkpoint order.
  std::vector<Tensor*> trainable();
  std::vector<const Tensor*> trainable() const;
  std::vector<float> flatten_params() const;
  void unflatten_params(const std::vector<float>& flat);

  static constexpr float kDropoutRate = 0.2f;
  static constexpr float kNoiseSigma = 0.32f;

  // Layer storage is public: the trainer and checkpoint IO address layers
  // directly.
  DenseLayer emb_query;     // curriculum-path embedding
  DenseLayer emb_original;  // original-path embedding
  DenseLayer proj_q;
  DenseLayer proj_k;
  DenseLayer head;

 private:
  ModelDims dims_;
  uint64_t seed_ = 0;
  int lesson_reached_ = 0;
  AnchorMemory memory_;
};

// One-hot rows for a label vector.
Tensor one_hot(const std::vector<int>& labels, int n_classes);

}  // namespace cal
