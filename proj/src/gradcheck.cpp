#include "calloc/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

#include "calloc/reference.hpp"
#include "calloc/tape.hpp"

namespace cal {

namespace {

const char* kTensorNames[10] = {"emb_query.w", "emb_query.b", "emb_original.w", "emb_original.b",
                                "proj_q.w",    "proj_q.b",    "proj_k.w",       "proj_k.b",
                                "head.w",      "head.b"};

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6});
}

// Central difference of the reference loss w.r.t. one float coordinate.
// The step actually applied is fl(x+h) - fl(x-h), not exactly 2h, so the
// quotient divides by the realized step.
double central_diff(float* coord, double h, const std::function<double()>& f) {
  float orig = *coord;
  float hi = static_cast<float>(static_cast<double>(orig) + h);
  float lo = static_cast<float>(static_cast<double>(orig) - h);
  *coord = hi;
  double f_hi = f();
  *coord = lo;
  double f_lo = f();
  *coord = orig;
  double realized = static_cast<double>(hi) - static_cast<double>(lo);
  if (realized == 0.0) throw std::runtime_error("gradcheck: zero realized step");
  return (f_hi - f_lo) / realized;
}

}  // namespace

GradCheckReport gradcheck_model(const CallocModel& model, const Tensor& x_in,
                                const Tensor& x_clean, const std::vector<int>& labels,
                                const GradCheckConfig& cfg) {
  auto t_start = std::chrono::steady_clock::now();
  GradCheckReport report;

  // Analytic pass: one tape build + backward in eval mode.
  Tape tape;
  CallocModel::LossNodes nodes =
      model.build_training_loss(tape, x_in, x_clean, labels, cfg.lambda, model.memory(),
                                /*train=*/false, /*input_needs_grad=*/true,
                                /*params_need_grad=*/true);
  tape.backward(nodes.total);

  // Mutable copies the numeric probe perturbs in place.
  CallocModel probe = model;
  Tensor x_probe = x_in;
  std::vector<Tensor*> probe_params = probe.trainable();

  // Coordinate space: input tensor first, then the ten parameter tensors.
  std::vector<size_t> sizes;
  sizes.push_back(x_probe.v.size());
  for (Tensor* t : probe_params) sizes.push_back(t->v.size());
  size_t total = 0;
  for (size_t s : sizes) total += s;

  auto loss = [&]() {
    return reference_calloc_loss(probe, x_probe, x_clean, labels, cfg.lambda);
  };

  RngStream rng{cfg.seed};
  int attempts_left = cfg.n_coords * 10;
  while (report.n_checked < cfg.n_coords && attempts_left-- > 0) {
    size_t flat = rng.next_below(total);
    int tensor_idx = 0;
    while (flat >= sizes[static_cast<size_t>(tensor_idx)]) {
      flat -= sizes[static_cast<size_t>(tensor_idx)];
      ++tensor_idx;
    }

    CoordResult c;
    c.index = static_cast<int>(flat);
    float* coord = nullptr;
    if (tensor_idx == 0) {
      c.tensor = "input";
      coord = &x_probe.v[flat];
      c.analytic = static_cast<double>(tape.grad(nodes.x_in).v[flat]);
    } else {
      c.tensor = kTensorNames[tensor_idx - 1];
      coord = &probe_params[static_cast<size_t>(tensor_idx - 1)]->v[flat];
      NodeId leaf = nodes.params.slots[static_cast<size_t>(tensor_idx - 1)];
      c.analytic = leaf >= 0 ? static_cast<double>(tape.grad(leaf).v[flat]) : 0.0;
    }

    double d_full = central_diff(coord, cfg.step, loss);
    double d_half = central_diff(coord, cfg.step / 2.0, loss);
    // Smooth functions give quotients agreeing to O(h^2); disagreement means a
    // relu kink sits inside the probed interval.
    if (rel_err(d_full, d_half) > 2e-3) {
      ++report.n_skipped;
      continue;
    }

    c.numeric = d_half;
    c.rel_err = rel_err(c.analytic, c.numeric);
    report.max_rel_err = std::max(report.max_rel_err, c.rel_err);
    ++report.n_checked;

    report.worst.push_back(c);
    std::sort(report.worst.begin(), report.worst.end(),
              [](const CoordResult& a, const CoordResult& b) { return a.rel_err > b.rel_err; });
    if (report.worst.size() > 5) report.worst.resize(5);
  }

  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  report.pass = report.n_checked >= cfg.n_coords && report.max_rel_err < cfg.tolerance;
  return report;
}

std::string format_gradcheck_report(const GradCheckReport& r) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf),
                "gradcheck: %d coordinates checked, %d kink-adjacent skipped, %.3fs\n",
                r.n_checked, r.n_skipped, r.seconds);
  out += buf;
  std::snprintf(buf, sizeof(buf), "max relative error: %.3e\n", r.max_rel_err);
  out += buf;
  for (const CoordResult& c : r.worst) {
    std::snprintf(buf, sizeof(buf), "  %-16s[%6d]  analytic % .6e  numeric % .6e  rel %.3e\n",
                  c.tensor.c_str(), c.index, c.analytic, c.numeric, c.rel_err);
    out += buf;
  }
  out += r.pass ? "result: PASS\n" : "result: FAIL\n";
  return out;
}

}  // namespace cal
