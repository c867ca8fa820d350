#include "calloc/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cal {

namespace {

float sign_of(float g) { return g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f); }

float clamp01(float v) { return std::min(std::max(v, 0.0f), 1.0f); }

void check_widths(const Tensor& x, const std::vector<int>& labels, const APMask& mask) {
  if (x.cols != mask.n_aps()) throw std::runtime_error("attack: mask width != input width");
  if (static_cast<int>(labels.size()) != x.rows) {
    throw std::runtime_error("attack: label count != batch rows");
  }
}

// Shared PGD/MIM iteration. step_dir fills `dir` with the signed step
// direction for the current iterate.
template <typename StepDir>
Tensor iterate_attack(const Tensor& x_base, float epsilon, float alpha, int steps,
                      const APMask& mask, StepDir step_dir) {
  Tensor x_adv = x_base;
  Tensor dir(x_base.rows, x_base.cols);
  for (int it = 0; it < steps; ++it) {
    step_dir(x_adv, dir);
    for (int r = 0; r < x_adv.rows; ++r) {
      for (int c = 0; c < x_adv.cols; ++c) {
        if (!mask.on[static_cast<size_t>(c)]) continue;
        float base = x_base.at(r, c);
        float v = x_adv.at(r, c) + alpha * dir.at(r, c);
        v = std::min(std::max(v, base - epsilon), base + epsilon);
        x_adv.at(r, c) = clamp01(v);
      }
    }
  }
  return x_adv;
}

}  // namespace

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "fgsm") return AttackKind::kFgsm;
  if (s == "pgd") return AttackKind::kPgd;
  if (s == "mim") return AttackKind::kMim;
  throw std::runtime_error("unknown attack kind '" + s + "' (expected fgsm|pgd|mim)");
}

AttackMode attack_mode_from_string(const std::string& s) {
  if (s == "manip" || s == "manipulation") return AttackMode::kManipulation;
  if (s == "spoof" || s == "spoofing") return AttackMode::kSpoofing;
  throw std::runtime_error("unknown attack mode '" + s + "' (expected manip|spoof)");
}

Targeting targeting_from_string(const std::string& s) {
  if (s == "random") return Targeting::kRandom;
  if (s == "strongest") return Targeting::kStrongest;
  throw std::runtime_error("unknown targeting '" + s + "' (expected random|strongest)");
}

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kFgsm: return "fgsm";
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kMim: return "mim";
  }
  return "?";
}

std::string to_string(AttackMode m) {
  return m == AttackMode::kManipulation ? "manip" : "spoof";
}

std::string to_string(Targeting t) { return t == Targeting::kRandom ? "random" : "strongest"; }

float AttackConfig::effective_alpha() const {
  if (kind == AttackKind::kFgsm) return epsilon;
  return alpha > 0.0f ? alpha : epsilon / 4.0f;
}

int AttackConfig::effective_steps() const { return kind == AttackKind::kFgsm ? 1 : steps; }

void AttackConfig::validate() const {
  if (epsilon < 0.0f) throw std::runtime_error("attack config: epsilon must be >= 0");
  if (phi_percent < 0.0f || phi_percent > 100.0f) {
    throw std::runtime_error("attack config: phi must be in [0,100]");
  }
  if (kind != AttackKind::kFgsm && steps < 1) {
    throw std::runtime_error("attack config: steps must be >= 1");
  }
  if (kind == AttackKind::kMim && mu < 0.0f) {
    throw std::runtime_error("attack config: mu must be >= 0");
  }
}

int APMask::count() const {
  return static_cast<int>(std::count(on.begin(), on.end(), uint8_t{1}));
}

APMask APMask::all(int n_aps, bool value) {
  APMask m;
  m.on.assign(static_cast<size_t>(n_aps), value ? 1 : 0);
  return m;
}

APMask select_target_aps(const FloorplanDataset& dataset, float phi_percent, Targeting targeting,
                         uint64_t seed) {
  if (phi_percent < 0.0f || phi_percent > 100.0f) {
    throw std::runtime_error("select_target_aps: phi must be in [0,100]");
  }
  int n = dataset.n_aps();
  int k = static_cast<int>(std::floor(static_cast<double>(phi_percent) / 100.0 * n));
  k = std::min(k, n);

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (targeting == Targeting::kRandom) {
    RngStream rng{seed};
    rng.shuffle(order);
  } else {
    std::vector<float> means = dataset.train_mean_rss();
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return means[static_cast<size_t>(a)] > means[static_cast<size_t>(b)]; });
  }

  APMask mask = APMask::all(n, false);
  for (int i = 0; i < k; ++i) mask.on[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
  return mask;
}

Tensor craft_fgsm(const InputGradFn& grad, const Tensor& x, const std::vector<int>& labels,
                  float epsilon, const APMask& mask) {
  if (epsilon < 0.0f) throw std::runtime_error("craft_fgsm: epsilon must be >= 0");
  check_widths(x, labels, mask);
  Tensor g = grad(x, labels);
  Tensor x_adv = x;
  for (int r = 0; r < x.rows; ++r) {
    for (int c = 0; c < x.cols; ++c) {
      if (!mask.on[static_cast<size_t>(c)]) continue;
      x_adv.at(r, c) = clamp01(x.at(r, c) + epsilon * sign_of(g.at(r, c)));
    }
  }
  return x_adv;
}

Tensor craft_pgd(const InputGradFn& grad, const Tensor& x, const std::vector<int>& labels,
                 float epsilon, float alpha, int steps, const APMask& mask) {
  if (epsilon < 0.0f) throw std::runtime_error("craft_pgd: epsilon must be >= 0");
  if (steps < 1) throw std::runtime_error("craft_pgd: steps must be >= 1");
  if (alpha <= 0.0f) throw std::runtime_error("craft_pgd: alpha must be > 0");
  check_widths(x, labels, mask);
  return iterate_attack(x, epsilon, alpha, steps, mask, [&](const Tensor& xt, Tensor& dir) {
    Tensor g = grad(xt, labels);
    for (size_t i = 0; i < g.v.size(); ++i) dir.v[i] = sign_of(g.v[i]);
  });
}

Tensor craft_mim(const InputGradFn& grad, const Tensor& x, const std::vector<int>& labels,
                 float epsilon, float alpha, int steps, float mu, const APMask& mask) {
  if (epsilon < 0.0f) throw std::runtime_error("craft_mim: epsilon must be >= 0");
  if (steps < 1) throw std::runtime_error("craft_mim: steps must be >= 1");
  if (alpha <= 0.0f) throw std::runtime_error("craft_mim: alpha must be > 0");
  if (mu < 0.0f) throw std::runtime_error("craft_mim: mu must be >= 0");
  check_widths(x, labels, mask);

  Tensor momentum(x.rows, x.cols);  // zero-initialized accumulator
  return iterate_attack(x, epsilon, alpha, steps, mask, [&](const Tensor& xt, Tensor& dir) {
    Tensor g = grad(xt, labels);
    for (int r = 0; r < g.rows; ++r) {
      float l1 = 0.0f;
      for (int c = 0; c < g.cols; ++c) l1 += std::fabs(g.at(r, c));
      for (int c = 0; c < g.cols; ++c) {
        float unit = l1 > 0.0f ? g.at(r, c) / l1 : 0.0f;
        momentum.at(r, c) = mu * momentum.at(r, c) + unit;
        dir.at(r, c) = sign_of(momentum.at(r, c));
      }
    }
  });
}

Tensor craft_attack(const InputGradFn& grad, const Tensor& x, const std::vector<int>& labels,
                    const AttackConfig& cfg, const APMask& mask, const Tensor* spoof_baseline) {
  cfg.validate();
  check_widths(x, labels, mask);

  Tensor x_base = x;
  if (cfg.mode == AttackMode::kSpoofing) {
    if (mask.count() == 0) return x;  // nothing to fabricate
    if (spoof_baseline == nullptr || spoof_baseline->rows != 1 ||
        spoof_baseline->cols != x.cols) {
      throw std::runtime_error("spoofing attack: baseline must be a 1 x n_aps row");
    }
    for (int r = 0; r < x_base.rows; ++r) {
      for (int c = 0; c < x_base.cols; ++c) {
        if (mask.on[static_cast<size_t>(c)]) x_base.at(r, c) = spoof_baseline->at(0, c);
      }
    }
  }

  switch (cfg.kind) {
    case AttackKind::kFgsm:
      return craft_fgsm(grad, x_base, labels, cfg.epsilon, mask);
    case AttackKind::kPgd:
      return craft_pgd(grad, x_base, labels, cfg.epsilon, cfg.effective_alpha(),
                       cfg.effective_steps(), mask);
    case AttackKind::kMim:
      return craft_mim(grad, x_base, labels, cfg.epsilon, cfg.effective_alpha(),
                       cfg.effective_steps(), cfg.mu, mask);
  }
  throw std::runtime_error("craft_attack: unreachable attack kind");
}

Tensor spoof_baseline_from(const FloorplanDataset& dataset) {
  std::vector<float> means = dataset.train_mean_rss();
  Tensor row(1, static_cast<int>(means.size()));
  for (size_t i = 0; i < means.size(); ++i) row.v[i] = normalize_dbm(means[i]);
  return row;
}

}  // namespace cal
