#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <set>

#include "calloc/synthetic.hpp"
#include "calloc/trainer.hpp"
#include "json.hpp"
#include "temp_dir.hpp"

using namespace cal;

namespace {

FloorplanDataset tiny_building(uint64_t seed = 4) {
  SyntheticBuildingConfig c;
  c.n_aps = 8;
  c.path_length_m = 6;  // 7 reference points
  c.rng_seed = seed;
  return generate_synthetic_building(c, default_device_profiles());
}

std::vector<float> const_weights(size_t n, float v) { return std::vector<float>(n, v); }

}  // namespace

TEST_CASE("default curriculum: ten lessons sweeping phi to 100") {
  std::vector<Lesson> lessons = build_default_curriculum(0.1f);
  REQUIRE(lessons.size() == 10);
  const float expect_phi[] = {0, 10, 20, 30, 40, 50, 60, 70, 80, 100};
  for (int i = 0; i < 10; ++i) {
    CHECK(lessons[i].index == i + 1);
    CHECK(lessons[i].phi_percent == expect_phi[i]);
    CHECK(lessons[i].epsilon == 0.1f);
    // Clean share decays linearly from 1.0 to 0.2 over the schedule.
    CHECK(lessons[i].original_fraction ==
          doctest::Approx(1.0f - 0.8f * i / 9.0f).epsilon(1e-6));
  }
  CHECK(lessons.front().original_fraction == 1.0f);
  CHECK(lessons.back().original_fraction == doctest::Approx(0.2f));
}

TEST_CASE("dense and nc curricula") {
  std::vector<Lesson> dense = build_dense_curriculum(0.2f);
  REQUIRE(dense.size() == 11);
  for (int i = 0; i < 10; ++i) CHECK(dense[i].phi_percent == 10.0f * i);
  CHECK(dense[10].phi_percent == 100.0f);
  CHECK(dense.front().original_fraction == 1.0f);
  CHECK(dense.back().original_fraction == doctest::Approx(0.2f));

  std::vector<Lesson> nc = build_nc_curriculum();
  REQUIRE(nc.size() == 1);
  CHECK(nc[0].phi_percent == 0.0f);
  CHECK(nc[0].original_fraction == 1.0f);

  CHECK(build_curriculum("default", 0.1f).size() == 10);
  CHECK(build_curriculum("dense", 0.1f).size() == 11);
  CHECK(build_curriculum("nc", 0.1f).size() == 1);
  CHECK_THROWS(build_curriculum("cyclic", 0.1f));
}

TEST_CASE("controller reverts after patience rising epochs and halves epsilon") {
  AdaptiveController ctl(0.1f, 3);
  ctl.begin_lesson(const_weights(4, 0.0f));

  // Best epoch: loss 1.0 with distinctive weights.
  CHECK(ctl.observe(1.0, const_weights(4, 7.0f)) == ControllerAction::kContinue);
  CHECK(ctl.lesson_best_loss() == 1.0);

  // Three consecutive strictly-rising losses trigger the revert.
  CHECK(ctl.observe(1.1, const_weights(4, 1.0f)) == ControllerAction::kContinue);
  CHECK(ctl.observe(1.2, const_weights(4, 2.0f)) == ControllerAction::kContinue);
  CHECK(ctl.observe(1.3, const_weights(4, 3.0f)) == ControllerAction::kRevertAndDecay);
  CHECK(ctl.epsilon() == 0.05f);
  CHECK(ctl.revert_count() == 1);
  // The restore target is the best epoch's exact weights.
  CHECK(ctl.best_weights() == const_weights(4, 7.0f));

  // A second spike halves epsilon again: 0.1 -> 0.05 -> 0.025.
  CHECK(ctl.observe(1.1, const_weights(4, 4.0f)) == ControllerAction::kContinue);
  CHECK(ctl.observe(1.2, const_weights(4, 5.0f)) == ControllerAction::kContinue);
  CHECK(ctl.observe(1.3, const_weights(4, 6.0f)) == ControllerAction::kContinue);
  CHECK(ctl.observe(1.4, const_weights(4, 6.5f)) == ControllerAction::kRevertAndDecay);
  CHECK(ctl.epsilon() == 0.025f);
  CHECK(ctl.revert_count() == 2);
  CHECK(ctl.best_weights() == const_weights(4, 7.0f));
}

TEST_CASE("a flat epoch interrupts the rising streak") {
  AdaptiveController ctl(0.1f, 3);
  ctl.begin_lesson(const_weights(1, 0.0f));
  ctl.observe(1.0, const_weights(1, 1.0f));
  ctl.observe(1.1, const_weights(1, 1.0f));
  ctl.observe(1.1, const_weights(1, 1.0f));  // equal, not rising: streak resets
  ctl.observe(1.2, const_weights(1, 1.0f));
  CHECK(ctl.observe(1.3, const_weights(1, 1.0f)) == ControllerAction::kContinue);
  CHECK(ctl.revert_count() == 0);
  CHECK(ctl.epsilon() == 0.1f);
}

TEST_CASE("controller advances once the loss flattens") {
  AdaptiveController ctl(0.1f, 3);
  ctl.begin_lesson(const_weights(1, 0.0f));
  // Needs patience+1 observations before the window comparison kicks in.
  CHECK(ctl.observe(0.5, const_weights(1, 1.0f)) == ControllerAction::kContinue);
  CHECK(ctl.observe(0.5, const_weights(1, 1.0f)) == ControllerAction::kContinue);
  CHECK(ctl.observe(0.5, const_weights(1, 1.0f)) == ControllerAction::kContinue);
  CHECK(ctl.observe(0.5, const_weights(1, 1.0f)) == ControllerAction::kAdvance);

  // A steadily improving loss never advances early.
  AdaptiveController busy(0.1f, 3);
  busy.begin_lesson(const_weights(1, 0.0f));
  double loss = 1.0;
  for (int i = 0; i < 20; ++i) {
    loss *= 0.9;
    CHECK(busy.observe(loss, const_weights(1, 1.0f)) == ControllerAction::kContinue);
  }
}

TEST_CASE("global best loss is a running minimum across lessons") {
  AdaptiveController ctl(0.1f, 2);
  ctl.begin_lesson(const_weights(1, 0.0f));
  ctl.observe(3.0, const_weights(1, 1.0f));
  CHECK(ctl.global_best_loss() == 3.0);
  ctl.observe(2.0, const_weights(1, 1.0f));
  CHECK(ctl.global_best_loss() == 2.0);
  ctl.observe(2.5, const_weights(1, 1.0f));
  CHECK(ctl.global_best_loss() == 2.0);

  // New lesson resets the lesson-best but not the global record.
  ctl.begin_lesson(const_weights(1, 5.0f));
  ctl.observe(4.0, const_weights(1, 1.0f));
  CHECK(ctl.lesson_best_loss() == 4.0);
  CHECK(ctl.global_best_loss() == 2.0);
  ctl.observe(1.5, const_weights(1, 1.0f));
  CHECK(ctl.global_best_loss() == 1.5);
}

TEST_CASE("lesson 1 data is the untouched training set") {
  FloorplanDataset d = tiny_building();
  LabeledMatrix train = normalized_train(d);
  CallocModel model = CallocModel::init(ModelDims{d.n_aps(), 32, 16, d.n_classes()}, 1);
  model.rebuild_anchor_memory(train);

  std::vector<Lesson> lessons = build_default_curriculum(0.1f);
  LessonData data = make_lesson_data(model, lessons[0], 0.1f, train, d, Targeting::kRandom,
                                     RngStream(9));
  CHECK(data.x_in.v == train.x.v);
  CHECK(data.x_clean.v == train.x.v);
  CHECK(data.labels == train.labels);

  // Same for a zero budget, whatever the lesson says.
  LessonData frozen = make_lesson_data(model, lessons[9], 0.0f, train, d, Targeting::kRandom,
                                       RngStream(9));
  CHECK(frozen.x_in.v == train.x.v);
}

TEST_CASE("lesson mix perturbs the adversarial share only, inside the mask") {
  FloorplanDataset d = tiny_building();
  LabeledMatrix train = normalized_train(d);
  CallocModel model = CallocModel::init(ModelDims{d.n_aps(), 32, 16, d.n_classes()}, 1);
  model.rebuild_anchor_memory(train);

  Lesson lesson;
  lesson.index = 6;
  lesson.phi_percent = 50.0f;
  lesson.original_fraction = 0.4f;
  const float eps = 0.1f;
  LessonData data = make_lesson_data(model, lesson, eps, train, d, Targeting::kRandom,
                                     RngStream(21));

  CHECK(data.x_clean.v == train.x.v);
  CHECK(data.labels == train.labels);

  const int n = train.x.rows;
  const int n_clean = static_cast<int>(std::lround(0.4 * n));
  int changed_rows = 0;
  std::set<int> changed_cols;
  for (int r = 0; r < n; ++r) {
    bool row_changed = false;
    for (int c = 0; c < train.x.cols; ++c) {
      float delta = data.x_in.at(r, c) - train.x.at(r, c);
      if (delta != 0.0f) {
        row_changed = true;
        changed_cols.insert(c);
        CHECK(std::abs(delta) <= eps + 1e-6f);
      }
    }
    changed_rows += row_changed;
  }
  CHECK(changed_rows == n - n_clean);
  // phi=50% of 8 APs: every change is confined to the same 4 masked columns.
  CHECK(static_cast<int>(changed_cols.size()) <= 4);
  CHECK(changed_cols.size() > 0);

  // Seeded: same stream reproduces the mix, another stream picks differently.
  LessonData again = make_lesson_data(model, lesson, eps, train, d, Targeting::kRandom,
                                      RngStream(21));
  CHECK(again.x_in.v == data.x_in.v);
  LessonData other = make_lesson_data(model, lesson, eps, train, d, Targeting::kRandom,
                                      RngStream(22));
  CHECK(other.x_in.v != data.x_in.v);
}

TEST_CASE("adam takes near-lr steps at first and resets cleanly") {
  Tensor p(1, 1);
  AdamOptimizer opt({&p}, 0.1f);
  Tensor g(1, 1, 1.0f);

  opt.step({&g});
  // With bias correction the first step is almost exactly lr.
  CHECK(p.at(0, 0) == doctest::Approx(-0.1f).epsilon(1e-3));
  opt.step({&g});
  CHECK(p.at(0, 0) == doctest::Approx(-0.2f).epsilon(1e-2));

  // After a reset the optimizer forgets its momentum entirely.
  opt.reset();
  Tensor gneg(1, 1, -1.0f);
  float before = p.at(0, 0);
  opt.step({&gneg});
  CHECK(p.at(0, 0) - before == doctest::Approx(0.1f).epsilon(1e-3));

  Tensor wrong(2, 1);
  CHECK_THROWS(opt.step({&wrong}));
  CHECK_THROWS(opt.step(std::vector<const Tensor*>{}));
}

TEST_CASE("one clean lesson reduces the training loss") {
  FloorplanDataset d = tiny_building();
  LabeledMatrix train = normalized_train(d);
  TrainerConfig cfg;
  cfg.learning_rate = 3e-3f;
  cfg.batch_size = 16;
  cfg.seed = 7;

  CallocModel model = CallocModel::init(ModelDims{d.n_aps(), 128, 64, d.n_classes()}, cfg.seed);
  model.rebuild_anchor_memory(train);
  AdaptiveController ctl(cfg.epsilon, cfg.patience);
  TrainingLog log;
  Lesson lesson = build_nc_curriculum()[0];

  int ran = train_lesson(model, lesson, train, d, cfg, ctl, 12, log, RngStream(100));
  CHECK(ran >= 1);
  CHECK(ran <= 12);
  REQUIRE(log.epochs.size() == static_cast<size_t>(ran));
  CHECK(log.epochs.front().epoch == 1);
  CHECK(log.epochs.back().loss < log.epochs.front().loss);
  CHECK(ctl.lesson_best_loss() <= log.epochs.front().loss);
  for (const EpochRecord& r : log.epochs) {
    CHECK(r.lesson == 1);
    CHECK(std::isfinite(r.loss));
    CHECK(r.ce > 0.0);
  }
}

TEST_CASE("exploding parameters abort with a clear error") {
  FloorplanDataset d = tiny_building();
  LabeledMatrix train = normalized_train(d);
  TrainerConfig cfg;
  CallocModel model = CallocModel::init(ModelDims{d.n_aps(), 32, 16, d.n_classes()}, 1);
  model.rebuild_anchor_memory(train);
  std::vector<float> flat = model.flatten_params();
  for (float& f : flat) f = 1e20f;
  model.unflatten_params(flat);

  AdaptiveController ctl(cfg.epsilon, cfg.patience);
  TrainingLog log;
  Lesson lesson = build_nc_curriculum()[0];
  CHECK_THROWS_WITH_AS(
      train_lesson(model, lesson, train, d, cfg, ctl, 3, log, RngStream(1)),
      doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("full curriculum run walks all ten lessons deterministically") {
  FloorplanDataset d = tiny_building();
  TrainerConfig cfg;
  cfg.epochs_per_lesson = 2;
  cfg.batch_size = 16;
  cfg.seed = 13;

  TrainResult a = train_full(d, cfg);
  CHECK(a.model.lesson_reached() == 10);
  CHECK_FALSE(a.model.memory().empty());
  CHECK(a.model.memory().rows() == static_cast<int>(d.train.size()));
  REQUIRE(a.log.epochs.size() == 20);  // 2 per lesson, no early advance possible
  std::set<int> lessons_seen;
  for (const EpochRecord& r : a.log.epochs) lessons_seen.insert(r.lesson);
  CHECK(lessons_seen.size() == 10);
  CHECK(a.log.epochs.back().phi_percent == 100.0f);

  TrainResult b = train_full(d, cfg);
  CHECK(a.model.flatten_params() == b.model.flatten_params());  // bit-identical

  cfg.seed = 14;
  TrainResult c = train_full(d, cfg);
  CHECK(a.model.flatten_params() != c.model.flatten_params());
}

TEST_CASE("nc ablation spends its whole budget on one clean lesson") {
  FloorplanDataset d = tiny_building();
  TrainerConfig cfg;
  cfg.curriculum = "nc";
  cfg.epochs_per_lesson = 2;
  cfg.nc_epoch_multiplier = 3;
  cfg.batch_size = 16;
  cfg.seed = 5;

  TrainResult r = train_full(d, cfg);
  CHECK(r.model.lesson_reached() == 1);
  CHECK(r.log.epochs.size() <= 6);  // 2 x 3 budget, early advance allowed
  CHECK(r.log.epochs.size() >= 1);
  for (const EpochRecord& rec : r.log.epochs) {
    CHECK(rec.lesson == 1);
    CHECK(rec.phi_percent == 0.0f);
  }
}

TEST_CASE("trainer config kv round trip and validation") {
  TrainerConfig c;
  c.learning_rate = 5e-4f;
  c.epochs_per_lesson = 33;
  c.batch_size = 24;
  c.patience = 4;
  c.lambda = 0.25f;
  c.epsilon = 0.2f;
  c.seed = 77;
  c.curriculum = "dense";
  c.nc_epoch_multiplier = 11;
  c.targeting = Targeting::kStrongest;

  KvConfig kv;
  c.to_kv(kv);
  TrainerConfig back = TrainerConfig::from_kv(kv);
  CHECK(back.learning_rate == c.learning_rate);
  CHECK(back.epochs_per_lesson == 33);
  CHECK(back.batch_size == 24);
  CHECK(back.patience == 4);
  CHECK(back.lambda == 0.25f);
  CHECK(back.epsilon == 0.2f);
  CHECK(back.seed == 77);
  CHECK(back.curriculum == "dense");
  CHECK(back.nc_epoch_multiplier == 11);
  CHECK(back.targeting == Targeting::kStrongest);

  // Absent keys fall back to defaults.
  TrainerConfig dflt = TrainerConfig::from_kv(KvConfig::parse_string("seed = 3\n"));
  CHECK(dflt.seed == 3);
  CHECK(dflt.learning_rate == 1e-3f);
  CHECK(dflt.curriculum == "default");

  TrainerConfig bad = c;
  bad.learning_rate = 0.0f;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.patience = 0;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.curriculum = "spiral";
  CHECK_THROWS(bad.validate());
  CHECK_THROWS(TrainerConfig::from_kv(KvConfig::parse_string("curriculum = spiral\n")));
}

TEST_CASE("training log serializes one json object per epoch") {
  TempDir tmp("trainlog");
  TrainingLog log;
  for (int i = 1; i <= 3; ++i) {
    EpochRecord r;
    r.lesson = 2;
    r.phi_percent = 10.0f;
    r.epoch = i;
    r.loss = 1.0 / i;
    r.ce = 0.9 / i;
    r.align_mse = 0.2 / i;
    r.epsilon = 0.1f;
    r.reverts = 0;
    r.action = i == 3 ? "advance" : "continue";
    r.global_best = 1.0 / i;
    log.epochs.push_back(r);
  }
  log.append_jsonl(tmp.file("log.jsonl"));

  std::ifstream in(tmp.file("log.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    ++lines;
    CHECK(j["lesson"] == 2);
    CHECK(j["epoch"] == lines);
    CHECK(j["loss"] == doctest::Approx(1.0 / lines));
  }
  CHECK(lines == 3);
}
