#pragma once

#include <memory>
#include <string>
#include <vector>

#include "calloc/dataset.hpp"
#include "calloc/model.hpp"

namespace cal {

// Common face of every evaluated localizer. predict() maps normalized
// fingerprints to class indices; gradient-based victims additionally expose
// d(loss)/d(input) for white-box crafting.
class Localizer {
 public:
  virtual ~Localizer() = default;
  virtual std::string name() const = 0;
  virtual std::vector<int> predict(const Tensor& x) const = 0;
  virtual bool has_input_gradient() const = 0;
  virtual Tensor input_gradient(const Tensor& x, const std::vector<int>& labels) const = 0;
};

class CallocLocalizer : public Localizer {
 public:
  explicit CallocLocalizer(CallocModel model, std::string name = "calloc")
      : model_(std::move(model)), name_(std::move(name)) {}

  std::string name() const override { return name_; }
  std::vector<int> predict(const Tensor& x) const override { return model_.predict(x); }
  bool has_input_gradient() const override { return true; }
  Tensor input_gradient(const Tensor& x, const std::vector<int>& labels) const override {
    return model_.input_gradient(x, labels);
  }
  const CallocModel& model() const { return model_; }

 private:
  CallocModel model_;
  std::string name_;
};

// Majority vote over the k nearest train rows (Euclidean over normalized
// rss); vote ties go to the tied label with the closest representative.
class KnnLocalizer : public Localizer {
 public:
  KnnLocalizer(const LabeledMatrix& train, int k);

  std::string name() const override { return "knn"; }
  std::vector<int> predict(const Tensor& x) const override;
  bool has_input_gradient() const override { return false; }
  Tensor input_gradient(const Tensor&, const std::vector<int>&) const override;

  int predict_one(const float* row) const;
  int k() const { return k_; }

 private:
  Tensor train_x_;
  std::vector<int> labels_;
  int k_;
};

// Plain n_in -> 128 -> 128 -> C relu classifier, optionally trained on a
// 50/50 clean/FGSM mix (the adversarially-augmented variant).
struct DnnTrainConfig {
  float learning_rate = 1e-3f;
  int epochs = 120;
  int batch_size = 32;
  uint64_t seed = 0;
  bool fgsm_augment = false;  // 50/50 clean/FGSM mix, regenerated per epoch
  float augment_epsilon = 0.1f;

  void validate() const;
};

class DnnLocalizer : public Localizer {
 public:
  static constexpr int kHidden = 128;

  // Fresh random net; train() fits it in place.
  DnnLocalizer(int n_in, int n_classes, uint64_t seed, std::string name = "dnn");
  void train(const LabeledMatrix& train, const DnnTrainConfig& cfg);

  std::string name() const override { return name_; }
  std::vector<int> predict(const Tensor& x) const override;
  bool has_input_gradient() const override { return true; }
  Tensor input_gradient(const Tensor& x, const std::vector<int>& labels) const override;

  // Mean cross-entropy on a labeled set (training diagnostics).
  double mean_ce(const LabeledMatrix& data) const;

  DenseLayer l1, l2, l3;

 private:
  Tensor logits(const Tensor& x) const;
  std::string name_;
};

}  // namespace cal
