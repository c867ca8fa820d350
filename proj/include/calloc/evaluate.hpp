#pragma once

#include <string>
#include <vector>

#include "calloc/attacks.hpp"
#include "calloc/baselines.hpp"
#include "calloc/dataset.hpp"

namespace cal {

// Euclidean distance in meters between two reference points, by class index.
double localization_error_m(const FloorplanDataset& d, int predicted_class, int true_class);

struct GridSpec {
  std::vector<float> eps_list{0.1f, 0.2f, 0.3f, 0.4f, 0.5f};
  std::vector<float> phi_list{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::vector<AttackKind> kinds{AttackKind::kFgsm};
  std::vector<std::string> devices;  // empty = every device in the dataset
  AttackMode mode = AttackMode::kManipulation;
  Targeting targeting = Targeting::kRandom;
  int steps = 10;
  float alpha = 0.0f;  // <= 0: per-attack default (epsilon/4)
  float mu = 1.0f;
  uint64_t seed = 0;
  // Fresh mask per test row instead of one mask per cell.
  bool mask_per_row = false;
  bool per_sample = false;  // keep per-sample errors in the cells

  void validate() const;
};

struct CellResult {
  std::string attack;
  std::string building;
  std::string device;
  float eps = 0.0f;
  float phi = 0.0f;
  std::string mode;
  int n = 0;
  double clean_mean_m = 0.0;
  double mean_m = 0.0;
  double median_m = 0.0;
  double p95_m = 0.0;
  double max_m = 0.0;
  uint64_t seed = 0;
  std::vector<double> per_sample_m;  // filled when GridSpec.per_sample
};

bool cells_equal(const std::vector<CellResult>& a, const std::vector<CellResult>& b);

struct GridDataset {
  std::string name;
  const FloorplanDataset* data = nullptr;
};

// Runs kinds x devices x eps x phi over each building. Attacks are crafted
// white-box against the victim, or against `surrogate` when the victim has no
// input gradient (required for KNN). Cell order and content are independent
// of evaluation order: the AP ordering behind the masks derives from
// (seed, building) only, so masks nest as phi grows, and each cell's recorded
// seed derives from (seed, cell index).
std::vector<CellResult> run_grid(const Localizer& victim, const Localizer* surrogate,
                                 const std::vector<GridDataset>& buildings,
                                 const GridSpec& spec);

// Mean error of the victim on clean test rows of one device.
double clean_mean_error_m(const Localizer& victim, const FloorplanDataset& d,
                          const std::string& device);

// Report IO. CSV is one row per cell; JSON nests attack -> building -> device
// and echoes the grid config. Per-sample errors appear only in the JSON.
void write_report_csv(const std::string& path, const std::vector<CellResult>& cells);
void write_report_json(const std::string& path, const std::vector<CellResult>& cells,
                       const GridSpec& spec);
std::vector<CellResult> load_report_json(const std::string& path);

// Human-readable eps x phi table of one attack/building/device slice,
// for terminal inspection of a report.
std::string format_report_table(const std::vector<CellResult>& cells, const std::string& attack,
                                const std::string& building, const std::string& device,
                                const std::string& metric = "mean_m");

inline constexpr const char* kReportCsvHeader =
    "attack,building,device,eps,phi,mode,n,clean_mean_m,mean_m,median_m,p95_m,max_m,seed";

}  // namespace cal
