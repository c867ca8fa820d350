#pragma once

#include <string>
#include <vector>

#include "calloc/attacks.hpp"
#include "calloc/dataset.hpp"
#include "calloc/kvconfig.hpp"
#include "calloc/model.hpp"

namespace cal {

struct Lesson {
  int index = 1;              // 1-based
  float phi_percent = 0.0f;
  float epsilon = 0.1f;       // training-time budget before controller decay
  float original_fraction = 1.0f;  // share of rows left clean in the lesson mix
};

// Ten lessons, phi = {0,10,...,80,100}: the endpoints are pinned by the
// schedule's design (lesson 1 all-clean, lesson 2 at 10, lesson 10 at 100)
// and the interior keeps 10-point steps, jumping 80 -> 100 at the end.
// original_fraction decays linearly 1.0 -> 0.2.
std::vector<Lesson> build_default_curriculum(float epsilon = 0.1f);
// Eleven-lesson alternative {0,10,...,90,100}, same endpoints.
std::vector<Lesson> build_dense_curriculum(float epsilon = 0.1f);
// Single clean lesson (the "no curriculum" ablation).
std::vector<Lesson> build_nc_curriculum();
std::vector<Lesson> build_curriculum(const std::string& preset, float epsilon = 0.1f);

struct TrainerConfig {
  float learning_rate = 1e-3f;
  int epochs_per_lesson = 50;
  int batch_size = 32;
  int patience = 5;
  float lambda = 0.5f;         // hyperspace-alignment weight
  float epsilon = 0.1f;        // training-time attack budget
  uint64_t seed = 0;
  std::string curriculum = "default";  // default | dense | nc
  // The NC ablation runs its single lesson this many times longer, so both
  // arms spend the same total epoch budget.
  int nc_epoch_multiplier = 10;
  Targeting targeting = Targeting::kRandom;

  void validate() const;
  static TrainerConfig from_kv(const KvConfig& kv);
  void to_kv(KvConfig& kv) const;
};

enum class ControllerAction { kContinue, kRevertAndDecay, kAdvance };

// Loss watchdog of the curriculum: snapshots best-on-lesson weights, reverts
// to them and halves epsilon when the loss rises for `patience` consecutive
// epochs, and advances the lesson early once the loss flattens (relative
// change < 1e-4 over the patience window). It also keeps a global best-loss
// record across the whole run, which is non-increasing by construction.
class AdaptiveController {
 public:
  AdaptiveController(float initial_epsilon, int patience)
      : epsilon_(initial_epsilon), patience_(patience) {}

  // Marks a lesson boundary; the current weights become the revert target
  // until an epoch beats them.
  void begin_lesson(const std::vector<float>& current_weights);

  // Feed one epoch loss; current_weights are snapshotted on improvement.
  ControllerAction observe(double epoch_loss, const std::vector<float>& current_weights);

  // Valid after a kRevertAndDecay: the exact weights to restore.
  const std::vector<float>& best_weights() const { return best_weights_; }

  float epsilon() const { return epsilon_; }
  int revert_count() const { return reverts_; }
  double lesson_best_loss() const { return lesson_best_; }
  double global_best_loss() const { return global_best_; }

  static constexpr double kAdvanceRelTol = 1e-4;

 private:
  float epsilon_;
  int patience_;
  int reverts_ = 0;
  double lesson_best_ = 0.0;
  double global_best_ = 0.0;
  bool any_epoch_ = false;
  std::vector<float> best_weights_;
  std::vector<double> history_;  // epoch losses since lesson start / last revert
  int rising_streak_ = 0;
};

// One lesson's training rows: x_in mixes FGSM-perturbed and clean rows;
// x_clean keeps every row's unperturbed source for the alignment term.
struct LessonData {
  Tensor x_in;
  Tensor x_clean;
  std::vector<int> labels;
};

// Crafts the lesson mix against the model's current weights (self-referential
// FGSM). Which rows stay clean is a seeded choice of round(fraction * n) rows.
LessonData make_lesson_data(const CallocModel& model, const Lesson& lesson, float epsilon,
                            const LabeledMatrix& train, const FloorplanDataset& dataset,
                            Targeting targeting, RngStream rng);

struct EpochRecord {
  int lesson = 0;
  float phi_percent = 0.0f;
  int epoch = 0;  // 1-based within lesson
  double loss = 0.0;
  double ce = 0.0;
  double align_mse = 0.0;
  float epsilon = 0.0f;  // controller epsilon after this epoch's action
  int reverts = 0;
  std::string action;  // continue | revert | advance
  double global_best = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  void append_jsonl(const std::string& path) const;  // one object per line
};

// Adam with bias correction; one slot per parameter tensor.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor*> params, float lr);
  void step(const std::vector<const Tensor*>& grads);
  void reset();  // drops moments and the step counter

  static constexpr float kBeta1 = 0.9f;
  static constexpr float kBeta2 = 0.999f;
  static constexpr float kEps = 1e-8f;

 private:
  std::vector<Tensor*> params_;
  float lr_;
  int t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainResult {
  CallocModel model;
  TrainingLog log;
};

// Full curriculum run: memory rebuilt from the train split before lesson 1
// and after every lesson; lesson data regenerated at lesson start and after
// each revert. Deterministic under config.seed.
TrainResult train_full(const FloorplanDataset& dataset, const TrainerConfig& config);

// Single-lesson driver used by train_full; exposed for tests. Returns the
// number of epochs actually run.
int train_lesson(CallocModel& model, const Lesson& lesson, const LabeledMatrix& train,
                 const FloorplanDataset& dataset, const TrainerConfig& config,
                 AdaptiveController& controller, int epoch_budget, TrainingLog& log,
                 RngStream lesson_rng);

}  // namespace cal
