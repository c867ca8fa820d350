#pragma once

#include <string>
#include <vector>

#include "calloc/model.hpp"

namespace cal {

struct GradCheckConfig {
  int n_coords = 150;       // sampled coordinates across parameters + inputs
  double step = 1e-3;       // central-difference step
  double tolerance = 1e-3;  // max relative error allowed
  float lambda = 0.5f;      // alignment-loss weight during the check
  uint64_t seed = 7;        // coordinate-sampling stream
};

struct CoordResult {
  std::string tensor;  // "input" or a layer tensor name
  int index = 0;       // flat coordinate within that tensor
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  int n_checked = 0;
  int n_skipped = 0;  // relu-kink-adjacent coordinates that were resampled
  double max_rel_err = 0.0;
  double seconds = 0.0;
  bool pass = false;
  std::vector<CoordResult> worst;  // a few highest-error coordinates
};

// Compares the tape's analytic gradients of the eval-mode training loss
// against central finite differences of the double-precision reference
// forward, over randomly sampled parameter and input coordinates.
//
// Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator. A
// coordinate whose half-step and full-step difference quotients disagree sits
// on (or numerically straddles) a relu kink, where the two-sided quotient is
// meaningless; such coordinates are resampled and counted in n_skipped.
GradCheckReport gradcheck_model(const CallocModel& model, const Tensor& x_in,
                                const Tensor& x_clean, const std::vector<int>& labels,
                                const GradCheckConfig& cfg);

std::string format_gradcheck_report(const GradCheckReport& r);

}  // namespace cal
