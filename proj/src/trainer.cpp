#include "calloc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "calloc/tape.hpp"
#include "json.hpp"

namespace cal {

namespace {

std::vector<Lesson> linear_schedule(const std::vector<float>& phis, float epsilon) {
  std::vector<Lesson> lessons;
  const int n = static_cast<int>(phis.size());
  for (int i = 0; i < n; ++i) {
    Lesson l;
    l.index = i + 1;
    l.phi_percent = phis[static_cast<size_t>(i)];
    l.epsilon = epsilon;
    l.original_fraction =
        n == 1 ? 1.0f : 1.0f - 0.8f * static_cast<float>(i) / static_cast<float>(n - 1);
    lessons.push_back(l);
  }
  return lessons;
}

}  // namespace

std::vector<Lesson> build_default_curriculum(float epsilon) {
  return linear_schedule({0, 10, 20, 30, 40, 50, 60, 70, 80, 100}, epsilon);
}

std::vector<Lesson> build_dense_curriculum(float epsilon) {
  return linear_schedule({0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100}, epsilon);
}

std::vector<Lesson> build_nc_curriculum() { return linear_schedule({0}, 0.0f); }

std::vector<Lesson> build_curriculum(const std::string& preset, float epsilon) {
  if (preset == "default") return build_default_curriculum(epsilon);
  if (preset == "dense") return build_dense_curriculum(epsilon);
  if (preset == "nc") return build_nc_curriculum();
  throw std::runtime_error("unknown curriculum preset '" + preset +
                           "' (expected default|dense|nc)");
}

void TrainerConfig::validate() const {
  if (learning_rate <= 0.0f) throw std::runtime_error("trainer config: learning_rate must be > 0");
  if (epochs_per_lesson < 1) throw std::runtime_error("trainer config: epochs_per_lesson must be >= 1");
  if (batch_size < 1) throw std::runtime_error("trainer config: batch_size must be >= 1");
  if (patience < 1) throw std::runtime_error("trainer config: patience must be >= 1");
  if (lambda < 0.0f) throw std::runtime_error("trainer config: lambda must be >= 0");
  if (epsilon < 0.0f) throw std::runtime_error("trainer config: epsilon must be >= 0");
  if (nc_epoch_multiplier < 1) throw std::runtime_error("trainer config: nc_epoch_multiplier must be >= 1");
  build_curriculum(curriculum, epsilon);  // validates the preset name
}

TrainerConfig TrainerConfig::from_kv(const KvConfig& kv) {
  TrainerConfig c;
  c.learning_rate = static_cast<float>(kv.get_f_or("learning_rate", c.learning_rate));
  c.epochs_per_lesson = static_cast<int>(kv.get_i_or("epochs_per_lesson", c.epochs_per_lesson));
  c.batch_size = static_cast<int>(kv.get_i_or("batch_size", c.batch_size));
  c.patience = static_cast<int>(kv.get_i_or("patience", c.patience));
  c.lambda = static_cast<float>(kv.get_f_or("lambda", c.lambda));
  c.epsilon = static_cast<float>(kv.get_f_or("train_epsilon", c.epsilon));
  c.seed = kv.get_u_or("seed", c.seed);
  c.curriculum = kv.get_or("curriculum", c.curriculum);
  c.nc_epoch_multiplier = static_cast<int>(kv.get_i_or("nc_epoch_multiplier", c.nc_epoch_multiplier));
  c.targeting = targeting_from_string(kv.get_or("train_targeting", to_string(c.targeting)));
  c.validate();
  return c;
}

void TrainerConfig::to_kv(KvConfig& kv) const {
  kv.set("learning_rate", format_float(learning_rate));
  kv.set("epochs_per_lesson", std::to_string(epochs_per_lesson));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("patience", std::to_string(patience));
  kv.set("lambda", format_float(lambda));
  kv.set("train_epsilon", format_float(epsilon));
  kv.set("seed", std::to_string(seed));
  kv.set("curriculum", curriculum);
  kv.set("nc_epoch_multiplier", std::to_string(nc_epoch_multiplier));
  kv.set("train_targeting", to_string(targeting));
}

void AdaptiveController::begin_lesson(const std::vector<float>& current_weights) {
  best_weights_ = current_weights;
  lesson_best_ = std::numeric_limits<double>::infinity();
  history_.clear();
  rising_streak_ = 0;
}

ControllerAction AdaptiveController::observe(double epoch_loss,
                                             const std::vector<float>& current_weights) {
  if (epoch_loss < lesson_best_) {
    lesson_best_ = epoch_loss;
    best_weights_ = current_weights;
  }
  if (!any_epoch_ || epoch_loss < global_best_) {
    global_best_ = epoch_loss;
    any_epoch_ = true;
  }

  if (!history_.empty() && epoch_loss > history_.back()) {
    ++rising_streak_;
  } else {
    rising_streak_ = 0;
  }
  history_.push_back(epoch_loss);

  if (rising_streak_ >= patience_) {
    epsilon_ *= 0.5f;
    ++reverts_;
    history_.clear();
    rising_streak_ = 0;
    return ControllerAction::kRevertAndDecay;
  }

  if (static_cast<int>(history_.size()) > patience_) {
    double past = history_[history_.size() - 1 - static_cast<size_t>(patience_)];
    double rel = std::fabs(epoch_loss - past) / std::max(std::fabs(past), 1e-12);
    if (rel < kAdvanceRelTol) return ControllerAction::kAdvance;
  }
  return ControllerAction::kContinue;
}

LessonData make_lesson_data(const CallocModel& model, const Lesson& lesson, float epsilon,
                            const LabeledMatrix& train, const FloorplanDataset& dataset,
                            Targeting targeting, RngStream rng) {
  LessonData d;
  d.x_clean = train.x;
  d.x_in = train.x;
  d.labels = train.labels;

  const int n = train.x.rows;
  const int n_clean = static_cast<int>(
      std::lround(static_cast<double>(lesson.original_fraction) * n));
  // Nothing to craft when every row stays clean; with phi=0 or a decayed-to-
  // zero budget, crafting would be the identity anyway.
  if (n_clean >= n || lesson.phi_percent <= 0.0f || epsilon <= 0.0f) return d;

  APMask mask = select_target_aps(dataset, lesson.phi_percent, targeting, rng.derive(1).seed());
  if (mask.count() == 0) return d;

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  RngStream pick = rng.derive(2);
  pick.shuffle(order);
  // order[0 .. n_clean) stay clean; the rest are attacked.
  const int n_adv = n - n_clean;
  if (n_adv <= 0) return d;

  Tensor xa(n_adv, train.x.cols);
  std::vector<int> la(static_cast<size_t>(n_adv));
  for (int i = 0; i < n_adv; ++i) {
    int src = order[static_cast<size_t>(n_clean + i)];
    std::copy_n(train.x.row_ptr(src), train.x.cols, xa.row_ptr(i));
    la[static_cast<size_t>(i)] = train.labels[static_cast<size_t>(src)];
  }

  InputGradFn grad = [&model](const Tensor& x, const std::vector<int>& labels) {
    return model.input_gradient(x, labels);
  };
  Tensor adv = craft_fgsm(grad, xa, la, epsilon, mask);
  for (int i = 0; i < n_adv; ++i) {
    int dst = order[static_cast<size_t>(n_clean + i)];
    std::copy_n(adv.row_ptr(i), adv.cols, d.x_in.row_ptr(dst));
  }
  return d;
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor*> params, float lr)
    : params_(std::move(params)), lr_(lr) {
  reset();
}

void AdamOptimizer::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
  for (Tensor* p : params_) {
    m_.emplace_back(p->rows, p->cols);
    v_.emplace_back(p->rows, p->cols);
  }
}

void AdamOptimizer::step(const std::vector<const Tensor*>& grads) {
  if (grads.size() != params_.size()) throw std::runtime_error("adam: gradient count mismatch");
  ++t_;
  const float bc1 = 1.0f - std::pow(kBeta1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(kBeta2, static_cast<float>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i];
    const Tensor& g = *grads[i];
    if (!p.same_shape(g)) throw std::runtime_error("adam: gradient shape mismatch");
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (size_t k = 0; k < p.v.size(); ++k) {
      m.v[k] = kBeta1 * m.v[k] + (1.0f - kBeta1) * g.v[k];
      v.v[k] = kBeta2 * v.v[k] + (1.0f - kBeta2) * g.v[k] * g.v[k];
      float mhat = m.v[k] / bc1;
      float vhat = v.v[k] / bc2;
      p.v[k] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

void TrainingLog::append_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open training log " + path);
  for (const EpochRecord& r : epochs) {
    nlohmann::json j{{"lesson", r.lesson},
                     {"phi", r.phi_percent},
                     {"epoch", r.epoch},
                     {"loss", r.loss},
                     {"ce", r.ce},
                     {"align_mse", r.align_mse},
                     {"epsilon", r.epsilon},
                     {"reverts", r.reverts},
                     {"action", r.action},
                     {"global_best", r.global_best}};
    out << j.dump() << "\n";
  }
}

int train_lesson(CallocModel& model, const Lesson& lesson, const LabeledMatrix& train,
                 const FloorplanDataset& dataset, const TrainerConfig& config,
                 AdaptiveController& controller, int epoch_budget, TrainingLog& log,
                 RngStream lesson_rng) {
  controller.begin_lesson(model.flatten_params());
  LessonData data = make_lesson_data(model, lesson, controller.epsilon(), train, dataset,
                                     config.targeting, lesson_rng.derive(0));

  AdamOptimizer opt(model.trainable(), config.learning_rate);
  const int n = data.x_in.rows;
  std::vector<int> order(static_cast<size_t>(n));

  int epochs_run = 0;
  for (int epoch = 1; epoch <= epoch_budget; ++epoch) {
    ++epochs_run;
    RngStream epoch_rng = lesson_rng.derive(1000u + static_cast<uint64_t>(epoch));
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng = epoch_rng.derive(0);
    shuffle_rng.shuffle(order);

    double sum_loss = 0.0, sum_ce = 0.0, sum_mse = 0.0;
    int batch_index = 0;
    for (int start = 0; start < n; start += config.batch_size, ++batch_index) {
      const int rows = std::min(config.batch_size, n - start);
      Tensor xb_in(rows, data.x_in.cols);
      Tensor xb_clean(rows, data.x_clean.cols);
      std::vector<int> lb(static_cast<size_t>(rows));
      for (int i = 0; i < rows; ++i) {
        int src = order[static_cast<size_t>(start + i)];
        std::copy_n(data.x_in.row_ptr(src), data.x_in.cols, xb_in.row_ptr(i));
        std::copy_n(data.x_clean.row_ptr(src), data.x_clean.cols, xb_clean.row_ptr(i));
        lb[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(src)];
      }

      Tape tape(epoch_rng.derive(100u + static_cast<uint64_t>(batch_index)));
      CallocModel::LossNodes nodes =
          model.build_training_loss(tape, xb_in, xb_clean, lb, config.lambda, model.memory(),
                                    /*train=*/true, /*input_needs_grad=*/false,
                                    /*params_need_grad=*/true);
      tape.backward(nodes.total);

      std::vector<const Tensor*> grads;
      std::vector<Tensor> zero_holders;
      zero_holders.reserve(nodes.params.slots.size());
      std::vector<Tensor*> params = model.trainable();
      for (size_t s = 0; s < nodes.params.slots.size(); ++s) {
        NodeId leaf = nodes.params.slots[s];
        if (leaf >= 0) {
          grads.push_back(&tape.grad(leaf));
        } else {
          zero_holders.emplace_back(params[s]->rows, params[s]->cols);
          grads.push_back(&zero_holders.back());
        }
      }
      opt.step(grads);

      const double w = rows;
      sum_loss += static_cast<double>(tape.value(nodes.total).v[0]) * w;
      sum_ce += static_cast<double>(tape.value(nodes.ce).v[0]) * w;
      if (nodes.align_mse >= 0) {
        sum_mse += static_cast<double>(tape.value(nodes.align_mse).v[0]) * w;
      }
    }

    const double epoch_loss = sum_loss / n;
    if (!std::isfinite(epoch_loss)) {
      throw std::runtime_error("training diverged to a non-finite loss at lesson " +
                               std::to_string(lesson.index) + " epoch " + std::to_string(epoch));
    }

    ControllerAction act = controller.observe(epoch_loss, model.flatten_params());

    EpochRecord rec;
    rec.lesson = lesson.index;
    rec.phi_percent = lesson.phi_percent;
    rec.epoch = epoch;
    rec.loss = epoch_loss;
    rec.ce = sum_ce / n;
    rec.align_mse = sum_mse / n;
    rec.epsilon = controller.epsilon();
    rec.reverts = controller.revert_count();
    rec.global_best = controller.global_best_loss();
    rec.action = act == ControllerAction::kContinue
                     ? "continue"
                     : (act == ControllerAction::kRevertAndDecay ? "revert" : "advance");
    log.epochs.push_back(rec);

    if (act == ControllerAction::kRevertAndDecay) {
      model.unflatten_params(controller.best_weights());
      opt.reset();
      data = make_lesson_data(model, lesson, controller.epsilon(), train, dataset,
                              config.targeting,
                              lesson_rng.derive(2000u + static_cast<uint64_t>(controller.revert_count())));
    } else if (act == ControllerAction::kAdvance) {
      break;
    }
  }
  return epochs_run;
}

TrainResult train_full(const FloorplanDataset& dataset, const TrainerConfig& config) {
  config.validate();
  dataset.validate();

  LabeledMatrix train = normalized_train(dataset);
  ModelDims dims;
  dims.n_in = dataset.n_aps();
  dims.n_classes = dataset.n_classes();

  TrainResult result;
  result.model = CallocModel::init(dims, config.seed);
  result.model.rebuild_anchor_memory(train);

  std::vector<Lesson> lessons = build_curriculum(config.curriculum, config.epsilon);
  const bool nc = lessons.size() == 1;
  const int budget = nc ? config.epochs_per_lesson * config.nc_epoch_multiplier
                        : config.epochs_per_lesson;

  AdaptiveController controller(config.epsilon, config.patience);
  RngStream root(config.seed);
  for (const Lesson& lesson : lessons) {
    train_lesson(result.model, lesson, train, dataset, config, controller, budget, result.log,
                 root.derive(3000u + static_cast<uint64_t>(lesson.index)));
    result.model.rebuild_anchor_memory(train);
    result.model.set_lesson_reached(lesson.index);
  }
  return result;
}

}  // namespace cal
