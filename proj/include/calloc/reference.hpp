#pragma once

#include <vector>

#include "calloc/model.hpp"

namespace cal {

// Straight-line double-precision re-implementations of the forward losses,
// written without the tape. They serve two purposes: an independent oracle for
// the autodiff tests (same math, different code path and precision), and the
// smooth function that gradcheck differentiates numerically — central
// differences at h ~ 1e-3 need better than float32 accumulation to resolve a
// 1e-3 relative-error budget.

// Eval-mode CALLOC training loss: CE(head(softmax(QK^T/sqrt(d_k))V), labels)
// + lambda * MSE(H_query(x_in), H_orig(x_clean)). Dropout and noise are
// identities in eval mode, so the value is deterministic. The anchor memory is
// treated as a constant, exactly as the tape treats it within a lesson.
double reference_calloc_loss(const CallocModel& model, const Tensor& x_in, const Tensor& x_clean,
                             const std::vector<int>& labels, float lambda);

// Plain relu MLP with cross-entropy: relu after every layer except the last.
double reference_mlp_ce(const std::vector<const DenseLayer*>& layers, const Tensor& x,
                        const std::vector<int>& labels);

}  // namespace cal
