#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <memory>

#include "calloc/attacks.hpp"
#include "calloc/model.hpp"

using namespace cal;

namespace {

Tensor random01(int rows, int cols, uint64_t seed) {
  Tensor t(rows, cols);
  RngStream rng(seed);
  for (float& v : t.v) v = static_cast<float>(rng.next_uniform());
  return t;
}

// Dataset stub with a given per-AP train mean; enough for mask selection and
// spoof baselines.
FloorplanDataset flat_dataset(const std::vector<float>& ap_means) {
  FloorplanDataset d;
  d.name = "flat";
  for (size_t i = 0; i < ap_means.size(); ++i) d.ap_names.push_back("ap_" + std::to_string(i));
  d.rps = {{0, 0.0f, 0.0f}};
  d.designated_device = "OP3";
  d.devices = {"OP3"};
  Fingerprint fp;
  fp.rss = ap_means;
  fp.rp_id = 0;
  fp.device = "OP3";
  d.train.push_back(fp);
  d.test.push_back(fp);
  return d;
}

FloorplanDataset flat_dataset(int n_aps, float mean = -50.0f) {
  return flat_dataset(std::vector<float>(static_cast<size_t>(n_aps), mean));
}

// A small fitted localizer used as a genuine white-box victim.
struct Victim {
  CallocModel model;
  InputGradFn grad;
};

Victim make_victim(uint64_t seed = 3, int n_in = 12, int n_classes = 5) {
  Victim v;
  v.model = CallocModel::init(ModelDims{n_in, 24, 12, n_classes}, seed);
  LabeledMatrix train;
  train.x = random01(15, n_in, seed + 1);
  train.labels.resize(15);
  for (int i = 0; i < 15; ++i) train.labels[static_cast<size_t>(i)] = i % n_classes;
  v.model.rebuild_anchor_memory(train);
  CallocModel* m = &v.model;
  v.grad = [m](const Tensor& x, const std::vector<int>& labels) {
    return m->input_gradient(x, labels);
  };
  return v;
}

std::vector<int> zeros(int n) { return std::vector<int>(static_cast<size_t>(n), 0); }

}  // namespace

TEST_CASE("mask size is floor(phi/100 * n)") {
  FloorplanDataset d156 = flat_dataset(156);
  CHECK(select_target_aps(d156, 0.0f, Targeting::kRandom, 1).count() == 0);
  CHECK(select_target_aps(d156, 10.0f, Targeting::kRandom, 1).count() == 15);
  CHECK(select_target_aps(d156, 50.0f, Targeting::kRandom, 1).count() == 78);
  CHECK(select_target_aps(d156, 100.0f, Targeting::kRandom, 1).count() == 156);

  FloorplanDataset d89 = flat_dataset(89);
  CHECK(select_target_aps(d89, 50.0f, Targeting::kRandom, 1).count() == 44);
  CHECK(select_target_aps(d89, 10.0f, Targeting::kRandom, 1).count() == 8);

  CHECK_THROWS(select_target_aps(d89, -1.0f, Targeting::kRandom, 1));
  CHECK_THROWS(select_target_aps(d89, 101.0f, Targeting::kRandom, 1));
}

TEST_CASE("masks nest as phi grows under one seed") {
  FloorplanDataset d = flat_dataset(40);
  for (Targeting t : {Targeting::kRandom, Targeting::kStrongest}) {
    APMask prev = select_target_aps(d, 0.0f, t, 7);
    for (float phi : {10.0f, 25.0f, 40.0f, 65.0f, 80.0f, 100.0f}) {
      APMask cur = select_target_aps(d, phi, t, 7);
      for (int c = 0; c < 40; ++c)
        if (prev.on[static_cast<size_t>(c)]) CHECK(cur.on[static_cast<size_t>(c)]);
      prev = cur;
    }
  }
}

TEST_CASE("random targeting is seeded; strongest follows train means") {
  FloorplanDataset d = flat_dataset(30);
  APMask a = select_target_aps(d, 50.0f, Targeting::kRandom, 11);
  APMask b = select_target_aps(d, 50.0f, Targeting::kRandom, 11);
  APMask c = select_target_aps(d, 50.0f, Targeting::kRandom, 12);
  CHECK(a.on == b.on);
  CHECK(a.on != c.on);

  // Means: ap1 and ap3 are the loudest; phi=50% of 4 -> exactly those two.
  FloorplanDataset ranked = flat_dataset({-80.0f, -20.0f, -60.0f, -30.0f});
  APMask strongest = select_target_aps(ranked, 50.0f, Targeting::kStrongest, 99);
  CHECK(strongest.on == std::vector<uint8_t>{0, 1, 0, 1});
  // Seed is irrelevant for strength ranking.
  APMask again = select_target_aps(ranked, 50.0f, Targeting::kStrongest, 100);
  CHECK(strongest.on == again.on);
}

TEST_CASE("fgsm steps along the gradient sign") {
  Tensor x(1, 2);
  x.at(0, 0) = 0.5f;
  x.at(0, 1) = 0.5f;
  int calls = 0;
  InputGradFn grad = [&](const Tensor& xt, const std::vector<int>&) {
    ++calls;
    Tensor g(xt.rows, xt.cols);
    g.at(0, 0) = 2.0f;
    g.at(0, 1) = -3.0f;
    return g;
  };
  Tensor adv = craft_fgsm(grad, x, zeros(1), 0.1f, APMask::all(2, true));
  CHECK(calls == 1);
  // Gradient magnitude is irrelevant, only its sign moves the input.
  CHECK(adv.at(0, 0) == 0.5f + 0.1f * 1.0f);
  CHECK(adv.at(0, 1) == 0.5f - 0.1f * 1.0f);
  CHECK(adv.at(0, 0) == doctest::Approx(0.6f));
  CHECK(adv.at(0, 1) == doctest::Approx(0.4f));
}

TEST_CASE("fgsm respects mask, budget zero, zero gradients, and [0,1]") {
  Tensor x(1, 3);
  x.at(0, 0) = 0.95f;
  x.at(0, 1) = 0.02f;
  x.at(0, 2) = 0.5f;
  InputGradFn grad = [](const Tensor& xt, const std::vector<int>&) {
    Tensor g(xt.rows, xt.cols);
    g.at(0, 0) = 1.0f;
    g.at(0, 1) = -1.0f;
    g.at(0, 2) = 5.0f;
    return g;
  };

  APMask mask = APMask::all(3, true);
  mask.on[2] = 0;
  Tensor adv = craft_fgsm(grad, x, zeros(1), 0.1f, mask);
  CHECK(adv.at(0, 0) == 1.0f);   // clamped from 1.05
  CHECK(adv.at(0, 1) == 0.0f);   // clamped from -0.08
  CHECK(adv.at(0, 2) == 0.5f);   // off-mask, untouched bit-for-bit

  Tensor same = craft_fgsm(grad, x, zeros(1), 0.0f, APMask::all(3, true));
  CHECK(same.v == x.v);

  InputGradFn flat = [](const Tensor& xt, const std::vector<int>&) {
    return Tensor(xt.rows, xt.cols);
  };
  Tensor still = craft_fgsm(flat, x, zeros(1), 0.1f, APMask::all(3, true));
  CHECK(still.v == x.v);  // sign(0) = 0

  CHECK_THROWS(craft_fgsm(grad, x, zeros(1), -0.1f, APMask::all(3, true)));
  CHECK_THROWS(craft_fgsm(grad, x, zeros(1), 0.1f, APMask::all(2, true)));
  CHECK_THROWS(craft_fgsm(grad, x, zeros(2), 0.1f, APMask::all(3, true)));
}

TEST_CASE("pgd marches by alpha per step inside the epsilon ball") {
  Tensor x(1, 1);
  x.at(0, 0) = 0.5f;
  int calls = 0;
  InputGradFn up = [&](const Tensor& xt, const std::vector<int>&) {
    ++calls;
    return Tensor(xt.rows, xt.cols, 1.0f);
  };

  // Three 0.05 steps fit inside eps=0.2: 0.5 -> 0.65.
  Tensor adv = craft_pgd(up, x, zeros(1), 0.2f, 0.05f, 3, APMask::all(1, true));
  CHECK(calls == 3);
  CHECK(adv.at(0, 0) == doctest::Approx(0.65f).epsilon(1e-6));

  // Big steps hit the ball wall at base + eps and stay there.
  adv = craft_pgd(up, x, zeros(1), 0.3f, 0.2f, 5, APMask::all(1, true));
  CHECK(adv.at(0, 0) == doctest::Approx(0.8f).epsilon(1e-6));

  // The [0,1] clamp still caps the march when the ball permits more.
  Tensor hi(1, 1);
  hi.at(0, 0) = 0.9f;
  adv = craft_pgd(up, hi, zeros(1), 0.5f, 0.3f, 4, APMask::all(1, true));
  CHECK(adv.at(0, 0) == 1.0f);

  CHECK_THROWS(craft_pgd(up, x, zeros(1), 0.2f, 0.0f, 3, APMask::all(1, true)));
  CHECK_THROWS(craft_pgd(up, x, zeros(1), 0.2f, 0.05f, 0, APMask::all(1, true)));
}

TEST_CASE("single-step pgd with alpha = eps is exactly fgsm") {
  Victim v = make_victim();
  Tensor x = random01(9, 12, 40);
  std::vector<int> labels;
  for (int i = 0; i < 9; ++i) labels.push_back(i % 5);
  FloorplanDataset d = flat_dataset(12);
  APMask mask = select_target_aps(d, 60.0f, Targeting::kRandom, 5);

  for (float eps : {0.05f, 0.1f, 0.3f}) {
    Tensor f = craft_fgsm(v.grad, x, labels, eps, mask);
    Tensor p = craft_pgd(v.grad, x, labels, eps, eps, 1, mask);
    CHECK(f.v == p.v);  // bit-for-bit
  }
}

TEST_CASE("mim with zero momentum is exactly pgd") {
  Victim v = make_victim(8);
  Tensor x = random01(7, 12, 41);
  std::vector<int> labels;
  for (int i = 0; i < 7; ++i) labels.push_back((i + 1) % 5);
  APMask mask = select_target_aps(flat_dataset(12), 80.0f, Targeting::kRandom, 2);

  Tensor p = craft_pgd(v.grad, x, labels, 0.2f, 0.05f, 6, mask);
  Tensor m = craft_mim(v.grad, x, labels, 0.2f, 0.05f, 6, 0.0f, mask);
  CHECK(p.v == m.v);  // bit-for-bit
}

TEST_CASE("mim momentum carries the step through a gradient reversal") {
  // Gradient points up on the first query and down afterwards. PGD retreats;
  // momentum (mu=1) cancels to zero and holds the high-water mark.
  auto flipper = [] {
    auto calls = std::make_shared<int>(0);
    return InputGradFn([calls](const Tensor& xt, const std::vector<int>&) {
      float s = (*calls)++ == 0 ? 1.0f : -1.0f;
      return Tensor(xt.rows, xt.cols, s);
    });
  };

  Tensor x(1, 1);
  x.at(0, 0) = 0.5f;
  Tensor pgd = craft_pgd(flipper(), x, zeros(1), 0.3f, 0.1f, 2, APMask::all(1, true));
  Tensor mim = craft_mim(flipper(), x, zeros(1), 0.3f, 0.1f, 2, 1.0f, APMask::all(1, true));
  CHECK(pgd.at(0, 0) == doctest::Approx(0.5f).epsilon(1e-6));  // up then back down
  CHECK(mim.at(0, 0) == doctest::Approx(0.6f).epsilon(1e-6));  // momentum holds
  CHECK(mim.at(0, 0) > pgd.at(0, 0));

  CHECK_THROWS(craft_mim(flipper(), x, zeros(1), 0.3f, 0.1f, 2, -1.0f, APMask::all(1, true)));
}

TEST_CASE("iterative attacks satisfy the l-inf contract on a real victim") {
  Victim v = make_victim(21);
  Tensor x = random01(20, 12, 42);
  std::vector<int> labels;
  for (int i = 0; i < 20; ++i) labels.push_back(i % 5);
  APMask mask = select_target_aps(flat_dataset(12), 50.0f, Targeting::kRandom, 1);
  const float eps = 0.15f;

  auto check_contract = [&](const Tensor& adv) {
    REQUIRE(adv.rows == x.rows);
    for (int r = 0; r < adv.rows; ++r) {
      for (int c = 0; c < adv.cols; ++c) {
        if (mask.on[static_cast<size_t>(c)]) {
          CHECK(std::abs(adv.at(r, c) - x.at(r, c)) <= eps + 1e-6f);
        } else {
          CHECK(adv.at(r, c) == x.at(r, c));
        }
        CHECK(adv.at(r, c) >= 0.0f);
        CHECK(adv.at(r, c) <= 1.0f);
      }
    }
  };

  check_contract(craft_fgsm(v.grad, x, labels, eps, mask));
  check_contract(craft_pgd(v.grad, x, labels, eps, eps / 4.0f, 10, mask));
  check_contract(craft_mim(v.grad, x, labels, eps, eps / 4.0f, 10, 1.0f, mask));
}

TEST_CASE("batched crafting equals row-by-row crafting") {
  Victim v = make_victim(33);
  Tensor x = random01(6, 12, 50);
  std::vector<int> labels = {0, 1, 2, 3, 4, 0};
  APMask mask = select_target_aps(flat_dataset(12), 70.0f, Targeting::kRandom, 9);

  auto one_row = [&](const Tensor& batch, int r) {
    Tensor row(1, batch.cols);
    for (int c = 0; c < batch.cols; ++c) row.at(0, c) = batch.at(r, c);
    return row;
  };

  Tensor batch_fgsm = craft_fgsm(v.grad, x, labels, 0.1f, mask);
  Tensor batch_pgd = craft_pgd(v.grad, x, labels, 0.1f, 0.025f, 3, mask);
  for (int r = 0; r < x.rows; ++r) {
    std::vector<int> lab = {labels[static_cast<size_t>(r)]};
    Tensor single_f = craft_fgsm(v.grad, one_row(x, r), lab, 0.1f, mask);
    Tensor single_p = craft_pgd(v.grad, one_row(x, r), lab, 0.1f, 0.025f, 3, mask);
    for (int c = 0; c < x.cols; ++c) {
      CHECK(batch_fgsm.at(r, c) == single_f.at(0, c));
      CHECK(batch_pgd.at(r, c) == single_p.at(0, c));
    }
  }
}

TEST_CASE("craft_attack dispatches with the defaulting rules") {
  Victim v = make_victim(13);
  Tensor x = random01(4, 12, 60);
  std::vector<int> labels = {1, 2, 3, 4};
  APMask mask = APMask::all(12, true);

  AttackConfig cfg;
  cfg.kind = AttackKind::kFgsm;
  cfg.epsilon = 0.1f;
  CHECK(craft_attack(v.grad, x, labels, cfg, mask).v ==
        craft_fgsm(v.grad, x, labels, 0.1f, mask).v);
  CHECK(cfg.effective_steps() == 1);
  CHECK(cfg.effective_alpha() == 0.1f);

  cfg.kind = AttackKind::kPgd;
  cfg.steps = 4;
  CHECK(cfg.effective_alpha() == 0.1f / 4.0f);  // alpha <= 0 defaults to eps/4
  CHECK(craft_attack(v.grad, x, labels, cfg, mask).v ==
        craft_pgd(v.grad, x, labels, 0.1f, 0.025f, 4, mask).v);
  cfg.alpha = 0.05f;
  CHECK(cfg.effective_alpha() == 0.05f);

  cfg.kind = AttackKind::kMim;
  cfg.mu = 0.8f;
  CHECK(craft_attack(v.grad, x, labels, cfg, mask).v ==
        craft_mim(v.grad, x, labels, 0.1f, 0.05f, 4, 0.8f, mask).v);

  cfg.epsilon = -1.0f;
  CHECK_THROWS(craft_attack(v.grad, x, labels, cfg, mask));
  cfg.epsilon = 0.1f;
  cfg.phi_percent = 120.0f;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("spoofing plants the counterfeit baseline before perturbing") {
  Victim v = make_victim(17);
  Tensor x = random01(5, 12, 70);
  std::vector<int> labels = {0, 1, 2, 3, 4};
  APMask mask = select_target_aps(flat_dataset(12), 50.0f, Targeting::kRandom, 3);
  Tensor baseline = random01(1, 12, 71);

  AttackConfig cfg;
  cfg.kind = AttackKind::kFgsm;
  cfg.mode = AttackMode::kSpoofing;

  // eps = 0: masked entries are exactly the baseline, the rest untouched.
  cfg.epsilon = 0.0f;
  Tensor planted = craft_attack(v.grad, x, labels, cfg, mask, &baseline);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) {
      if (mask.on[static_cast<size_t>(c)])
        CHECK(planted.at(r, c) == baseline.at(0, c));
      else
        CHECK(planted.at(r, c) == x.at(r, c));
    }

  // eps > 0: perturbation is measured from the baseline, not from x.
  cfg.epsilon = 0.1f;
  Tensor adv = craft_attack(v.grad, x, labels, cfg, mask, &baseline);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) {
      if (mask.on[static_cast<size_t>(c)]) {
        CHECK(std::abs(adv.at(r, c) - baseline.at(0, c)) <= 0.1f + 1e-6f);
      } else {
        CHECK(adv.at(r, c) == x.at(r, c));
      }
    }

  // An empty mask means nothing can be fabricated: identity, no baseline needed.
  Tensor untouched = craft_attack(v.grad, x, labels, cfg, APMask::all(12, false));
  CHECK(untouched.v == x.v);

  CHECK_THROWS_WITH_AS(craft_attack(v.grad, x, labels, cfg, mask),
                       doctest::Contains("baseline"), std::runtime_error);
  Tensor bad_shape = random01(2, 12, 72);
  CHECK_THROWS(craft_attack(v.grad, x, labels, cfg, mask, &bad_shape));

  // Manipulation and spoofing differ only where the mask is on.
  cfg.mode = AttackMode::kManipulation;
  Tensor manip = craft_attack(v.grad, x, labels, cfg, mask);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c)
      if (!mask.on[static_cast<size_t>(c)]) CHECK(manip.at(r, c) == adv.at(r, c));
}

TEST_CASE("spoof baseline is the normalized per-AP train mean") {
  FloorplanDataset d = flat_dataset({-50.0f, -80.0f, -100.0f});
  Tensor base = spoof_baseline_from(d);
  REQUIRE(base.rows == 1);
  REQUIRE(base.cols == 3);
  CHECK(base.at(0, 0) == doctest::Approx(0.5f));
  CHECK(base.at(0, 1) == doctest::Approx(0.2f));
  CHECK(base.at(0, 2) == 0.0f);
}

TEST_CASE("attack enum strings round trip") {
  for (AttackKind k : {AttackKind::kFgsm, AttackKind::kPgd, AttackKind::kMim})
    CHECK(attack_kind_from_string(to_string(k)) == k);
  for (AttackMode m : {AttackMode::kManipulation, AttackMode::kSpoofing})
    CHECK(attack_mode_from_string(to_string(m)) == m);
  for (Targeting t : {Targeting::kRandom, Targeting::kStrongest})
    CHECK(targeting_from_string(to_string(t)) == t);
  CHECK(attack_mode_from_string("manipulation") == AttackMode::kManipulation);
  CHECK(attack_mode_from_string("spoofing") == AttackMode::kSpoofing);
  CHECK_THROWS(attack_kind_from_string("cw"));
  CHECK_THROWS(attack_mode_from_string(""));
  CHECK_THROWS(targeting_from_string("weakest"));
}
