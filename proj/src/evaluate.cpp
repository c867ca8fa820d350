#include "calloc/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "calloc/kvconfig.hpp"
#include "json.hpp"

namespace cal {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct ErrorStats {
  double mean = 0.0, median = 0.0, p95 = 0.0, max = 0.0;
};

ErrorStats stats_of(std::vector<double> errs) {
  ErrorStats s;
  if (errs.empty()) return s;
  double sum = 0.0;
  for (double e : errs) {
    sum += e;
    s.max = std::max(s.max, e);
  }
  s.mean = sum / static_cast<double>(errs.size());
  std::sort(errs.begin(), errs.end());
  size_t n = errs.size();
  s.median = n % 2 == 1 ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
  // Nearest-rank percentile: the smallest value with at least 95% of the
  // sample at or below it.
  size_t rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95 = errs[std::min(rank, n) - 1];
  return s;
}

std::vector<double> errors_of(const FloorplanDataset& d, const std::vector<int>& predicted,
                              const std::vector<int>& truth) {
  std::vector<double> errs(predicted.size());
  for (size_t i = 0; i < predicted.size(); ++i) {
    errs[i] = localization_error_m(d, predicted[i], truth[i]);
  }
  return errs;
}

}  // namespace

double localization_error_m(const FloorplanDataset& d, int predicted_class, int true_class) {
  const ReferencePoint& a = d.rp_of_class(predicted_class);
  const ReferencePoint& b = d.rp_of_class(true_class);
  double dx = static_cast<double>(a.x_m) - b.x_m;
  double dy = static_cast<double>(a.y_m) - b.y_m;
  return std::sqrt(dx * dx + dy * dy);
}

void GridSpec::validate() const {
  if (eps_list.empty() || phi_list.empty() || kinds.empty()) {
    throw std::runtime_error("grid: eps, phi, and attack-kind axes must be non-empty");
  }
  for (float e : eps_list) {
    if (e < 0.0f) throw std::runtime_error("grid: eps must be >= 0");
  }
  for (float p : phi_list) {
    if (p < 0.0f || p > 100.0f) throw std::runtime_error("grid: phi must be in [0,100]");
  }
  if (steps < 1) throw std::runtime_error("grid: steps must be >= 1");
  if (mu < 0.0f) throw std::runtime_error("grid: mu must be >= 0");
}

double clean_mean_error_m(const Localizer& victim, const FloorplanDataset& d,
                          const std::string& device) {
  LabeledMatrix test = normalized_test(d, device);
  std::vector<double> errs = errors_of(d, victim.predict(test.x), test.labels);
  double sum = 0.0;
  for (double e : errs) sum += e;
  return errs.empty() ? 0.0 : sum / static_cast<double>(errs.size());
}

std::vector<CellResult> run_grid(const Localizer& victim, const Localizer* surrogate,
                                 const std::vector<GridDataset>& buildings,
                                 const GridSpec& spec) {
  spec.validate();
  if (buildings.empty()) throw std::runtime_error("grid: no buildings given");

  const Localizer* crafter = &victim;
  if (!victim.has_input_gradient()) {
    if (surrogate == nullptr || !surrogate->has_input_gradient()) {
      throw std::runtime_error("victim '" + victim.name() +
                               "' has no input gradient; pass a gradient-based surrogate");
    }
    crafter = surrogate;
  }
  InputGradFn grad = [crafter](const Tensor& x, const std::vector<int>& labels) {
    return crafter->input_gradient(x, labels);
  };

  std::vector<CellResult> cells;
  uint64_t cell_index = 0;
  RngStream grid_root(spec.seed);

  for (const GridDataset& b : buildings) {
    if (b.data == nullptr) throw std::runtime_error("grid: null building dataset");
    const FloorplanDataset& d = *b.data;
    // One AP ordering per building: masks nest as phi grows.
    uint64_t mask_seed = grid_root.derive(fnv1a(b.name)).seed();
    Tensor spoof_base = spoof_baseline_from(d);

    std::vector<std::string> devices = spec.devices.empty() ? d.devices : spec.devices;
    for (const AttackKind kind : spec.kinds) {
      for (const std::string& device : devices) {
        LabeledMatrix test = normalized_test(d, device);
        if (test.x.rows == 0) {
          throw std::runtime_error("grid: no test rows for device '" + device + "' in " + b.name);
        }
        std::vector<double> clean_errs = errors_of(d, victim.predict(test.x), test.labels);
        double clean_mean = 0.0;
        for (double e : clean_errs) clean_mean += e;
        clean_mean /= static_cast<double>(clean_errs.size());

        for (const float eps : spec.eps_list) {
          for (const float phi : spec.phi_list) {
            AttackConfig cfg;
            cfg.kind = kind;
            cfg.epsilon = eps;
            cfg.phi_percent = phi;
            cfg.alpha = spec.alpha;
            cfg.steps = spec.steps;
            cfg.mu = spec.mu;
            cfg.mode = spec.mode;
            cfg.targeting = spec.targeting;

            CellResult cell;
            cell.attack = to_string(kind);
            cell.building = b.name;
            cell.device = device;
            cell.eps = eps;
            cell.phi = phi;
            cell.mode = to_string(spec.mode);
            cell.n = test.x.rows;
            cell.clean_mean_m = clean_mean;
            cell.seed = grid_root.derive(0x9E37 + cell_index).seed();
            ++cell_index;

            std::vector<double> errs;
            APMask cell_mask = select_target_aps(d, phi, spec.targeting, mask_seed);
            bool no_op_manipulation = spec.mode == AttackMode::kManipulation &&
                                      (eps == 0.0f || cell_mask.count() == 0);
            if (no_op_manipulation) {
              // Zero budget or an empty mask leaves every input untouched;
              // reuse the clean predictions so the identity holds bit-for-bit.
              errs = clean_errs;
            } else if (spec.mask_per_row) {
              errs.reserve(static_cast<size_t>(test.x.rows));
              for (int r = 0; r < test.x.rows; ++r) {
                APMask mask = select_target_aps(
                    d, phi, spec.targeting,
                    RngStream(mask_seed).derive(static_cast<uint64_t>(r) + 1).seed());
                Tensor row(1, test.x.cols);
                std::copy_n(test.x.row_ptr(r), test.x.cols, row.v.begin());
                std::vector<int> lab{test.labels[static_cast<size_t>(r)]};
                Tensor adv = craft_attack(grad, row, lab, cfg, mask, &spoof_base);
                errs.push_back(
                    localization_error_m(d, victim.predict(adv)[0], lab[0]));
              }
            } else {
              Tensor adv = craft_attack(grad, test.x, test.labels, cfg, cell_mask, &spoof_base);
              errs = errors_of(d, victim.predict(adv), test.labels);
            }

            ErrorStats st = stats_of(errs);
            cell.mean_m = st.mean;
            cell.median_m = st.median;
            cell.p95_m = st.p95;
            cell.max_m = st.max;
            if (spec.per_sample) cell.per_sample_m = errs;
            cells.push_back(std::move(cell));
          }
        }
      }
    }
  }
  return cells;
}

bool cells_equal(const std::vector<CellResult>& a, const std::vector<CellResult>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    const CellResult& x = a[i];
    const CellResult& y = b[i];
    if (x.attack != y.attack || x.building != y.building || x.device != y.device ||
        x.eps != y.eps || x.phi != y.phi || x.mode != y.mode || x.n != y.n ||
        x.clean_mean_m != y.clean_mean_m || x.mean_m != y.mean_m || x.median_m != y.median_m ||
        x.p95_m != y.p95_m || x.max_m != y.max_m || x.seed != y.seed ||
        x.per_sample_m != y.per_sample_m) {
      return false;
    }
  }
  return true;
}

void write_report_csv(const std::string& path, const std::vector<CellResult>& cells) {
  if (cells.empty()) throw std::runtime_error("report: refusing to write an empty grid");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open report " + path);
  out << kReportCsvHeader << "\n";
  for (const CellResult& c : cells) {
    out << c.attack << ',' << c.building << ',' << c.device << ',' << format_float32(c.eps)
        << ',' << format_float32(c.phi) << ',' << c.mode << ',' << c.n << ','
        << format_float(c.clean_mean_m) << ',' << format_float(c.mean_m) << ','
        << format_float(c.median_m) << ',' << format_float(c.p95_m) << ','
        << format_float(c.max_m) << ',' << c.seed << "\n";
  }
  if (!out) throw std::runtime_error("write failed for report " + path);
}

namespace {

nlohmann::json spec_to_json(const GridSpec& spec) {
  nlohmann::json kinds = nlohmann::json::array();
  for (AttackKind k : spec.kinds) kinds.push_back(to_string(k));
  return nlohmann::json{{"eps", spec.eps_list},
                        {"phi", spec.phi_list},
                        {"kinds", kinds},
                        {"devices", spec.devices},
                        {"mode", to_string(spec.mode)},
                        {"targeting", to_string(spec.targeting)},
                        {"steps", spec.steps},
                        {"alpha", spec.alpha},
                        {"mu", spec.mu},
                        {"seed", spec.seed},
                        {"mask_per_row", spec.mask_per_row},
                        {"per_sample", spec.per_sample}};
}

nlohmann::json cell_to_json(const CellResult& c) {
  nlohmann::json j{{"eps", c.eps},           {"phi", c.phi},
                   {"mode", c.mode},         {"n", c.n},
                   {"clean_mean_m", c.clean_mean_m}, {"mean_m", c.mean_m},
                   {"median_m", c.median_m}, {"p95_m", c.p95_m},
                   {"max_m", c.max_m},       {"seed", c.seed}};
  if (!c.per_sample_m.empty()) j["per_sample_m"] = c.per_sample_m;
  return j;
}

}  // namespace

void write_report_json(const std::string& path, const std::vector<CellResult>& cells,
                       const GridSpec& spec) {
  if (cells.empty()) throw std::runtime_error("report: refusing to write an empty grid");
  nlohmann::json root;
  root["config"] = spec_to_json(spec);
  nlohmann::json& by_attack = root["cells"];
  for (const CellResult& c : cells) {
    by_attack[c.attack][c.building][c.device].push_back(cell_to_json(c));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open report " + path);
  out << root.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed for report " + path);
}

std::vector<CellResult> load_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report " + path);
  nlohmann::json root = nlohmann::json::parse(in);
  std::vector<CellResult> cells;
  for (const auto& [attack, by_building] : root.at("cells").items()) {
    for (const auto& [building, by_device] : by_building.items()) {
      for (const auto& [device, list] : by_device.items()) {
        for (const auto& j : list) {
          CellResult c;
          c.attack = attack;
          c.building = building;
          c.device = device;
          c.eps = j.at("eps").get<float>();
          c.phi = j.at("phi").get<float>();
          c.mode = j.at("mode").get<std::string>();
          c.n = j.at("n").get<int>();
          c.clean_mean_m = j.at("clean_mean_m").get<double>();
          c.mean_m = j.at("mean_m").get<double>();
          c.median_m = j.at("median_m").get<double>();
          c.p95_m = j.at("p95_m").get<double>();
          c.max_m = j.at("max_m").get<double>();
          c.seed = j.at("seed").get<uint64_t>();
          if (j.contains("per_sample_m")) {
            c.per_sample_m = j.at("per_sample_m").get<std::vector<double>>();
          }
          cells.push_back(std::move(c));
        }
      }
    }
  }
  return cells;
}

std::string format_report_table(const std::vector<CellResult>& cells, const std::string& attack,
                                const std::string& building, const std::string& device,
                                const std::string& metric) {
  auto pick = [&](const CellResult& c) -> double {
    if (metric == "mean_m") return c.mean_m;
    if (metric == "median_m") return c.median_m;
    if (metric == "p95_m") return c.p95_m;
    if (metric == "max_m") return c.max_m;
    if (metric == "clean_mean_m") return c.clean_mean_m;
    throw std::runtime_error("unknown metric '" + metric + "'");
  };

  std::vector<float> eps_axis, phi_axis;
  std::vector<const CellResult*> slice;
  for (const CellResult& c : cells) {
    if (c.attack != attack || c.building != building || c.device != device) continue;
    slice.push_back(&c);
    if (std::find(eps_axis.begin(), eps_axis.end(), c.eps) == eps_axis.end())
      eps_axis.push_back(c.eps);
    if (std::find(phi_axis.begin(), phi_axis.end(), c.phi) == phi_axis.end())
      phi_axis.push_back(c.phi);
  }
  if (slice.empty()) {
    return "no cells match attack=" + attack + " building=" + building + " device=" + device + "\n";
  }
  std::sort(eps_axis.begin(), eps_axis.end());
  std::sort(phi_axis.begin(), phi_axis.end());

  char buf[64];
  std::string out = metric + " [m], " + attack + " on " + building + " / " + device + "\n";
  out += "eps\\phi";
  for (float p : phi_axis) {
    std::snprintf(buf, sizeof(buf), "%8.0f", static_cast<double>(p));
    out += buf;
  }
  out += "\n";
  for (float e : eps_axis) {
    std::snprintf(buf, sizeof(buf), "%-7.2f", static_cast<double>(e));
    out += buf;
    for (float p : phi_axis) {
      const CellResult* found = nullptr;
      for (const CellResult* c : slice) {
        if (c->eps == e && c->phi == p) {
          found = c;
          break;
        }
      }
      if (found != nullptr) {
        std::snprintf(buf, sizeof(buf), "%8.2f", pick(*found));
      } else {
        std::snprintf(buf, sizeof(buf), "%8s", "-");
      }
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace cal
