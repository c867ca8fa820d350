#pragma once

#include <functional>
#include <string>
#include <vector>

#include "calloc/dataset.hpp"
#include "calloc/tensor.hpp"

namespace cal {

enum class AttackKind { kFgsm, kPgd, kMim };
enum class AttackMode { kManipulation, kSpoofing };
enum class Targeting { kRandom, kStrongest };

AttackKind attack_kind_from_string(const std::string& s);
AttackMode attack_mode_from_string(const std::string& s);
Targeting targeting_from_string(const std::string& s);
std::string to_string(AttackKind k);
std::string to_string(AttackMode m);
std::string to_string(Targeting t);

struct AttackConfig {
  AttackKind kind = AttackKind::kFgsm;
  float epsilon = 0.1f;    // l-inf budget in normalized units
  float phi_percent = 100.0f;  // percent of roster APs attacked
  float alpha = 0.0f;      // per-step size; <= 0 selects the epsilon/4 default
  int steps = 10;          // ignored for FGSM (always 1)
  float mu = 1.0f;         // MIM momentum decay
  AttackMode mode = AttackMode::kManipulation;
  Targeting targeting = Targeting::kRandom;
  uint64_t seed = 0;       // mask selection stream

  // Effective iteration parameters after defaulting rules.
  float effective_alpha() const;
  int effective_steps() const;
  void validate() const;
};

// Boolean vector over the AP roster; perturbation outside the mask is exactly
// zero. Masks for the same seed nest as phi grows: each is a prefix of one
// seeded AP ordering.
struct APMask {
  std::vector<uint8_t> on;

  int n_aps() const { return static_cast<int>(on.size()); }
  int count() const;
  static APMask all(int n_aps, bool value);
};

APMask select_target_aps(const FloorplanDataset& dataset, float phi_percent, Targeting targeting,
                         uint64_t seed);

// d(loss)/d(input) of the victim on a batch; the white-box oracle the attacks
// iterate against. Rows are independent, so one batched backward yields every
// sample's gradient.
using InputGradFn = std::function<Tensor(const Tensor& x, const std::vector<int>& labels)>;

// All crafting operates on normalized fingerprints in [0,1]; outputs satisfy
// |x_adv - x_base|_inf <= eps on-mask, x_adv = x_base off-mask, range [0,1].
Tensor craft_fgsm(const InputGradFn& grad, const Tensor& x, const std::vector<int>& labels,
                  float epsilon, const APMask& mask);
Tensor craft_pgd(const InputGradFn& grad, const Tensor& x, const std::vector<int>& labels,
                 float epsilon, float alpha, int steps, const APMask& mask);
Tensor craft_mim(const InputGradFn& grad, const Tensor& x, const std::vector<int>& labels,
                 float epsilon, float alpha, int steps, float mu, const APMask& mask);

// Mode-aware entry point. Manipulation perturbs the genuine readings;
// spoofing first replaces masked entries with the counterfeit baseline
// (normalized per-AP train-set mean), then perturbs within eps of that
// baseline. spoof_baseline is required for spoofing mode (1 x n_aps).
Tensor craft_attack(const InputGradFn& grad, const Tensor& x, const std::vector<int>& labels,
                    const AttackConfig& cfg, const APMask& mask,
                    const Tensor* spoof_baseline = nullptr);

// Normalized per-AP train means, the counterfeit signal a spoofer fabricates.
Tensor spoof_baseline_from(const FloorplanDataset& dataset);

}  // namespace cal
