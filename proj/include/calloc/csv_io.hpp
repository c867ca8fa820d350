#pragma once

#include <string>
#include <vector>

#include "calloc/dataset.hpp"

namespace cal {

// One parsed CSV record. Layout follows the on-disk schema:
//   rp_id,device,x_m,y_m,ap_0,...,ap_{n-1}[,attacked]
struct CsvRow {
  int rp_id = 0;
  std::string device;
  float x_m = 0.0f;
  float y_m = 0.0f;
  std::vector<float> rss;
  int attacked = 0;
};

struct CsvTable {
  std::vector<std::string> ap_names;
  std::vector<CsvRow> rows;
  bool has_attacked_column = false;
};

// Strict reader: rejects malformed headers, short rows, non-numeric or
// out-of-range rss. Empty rss cells load as -100 (AP absent from the row).
CsvTable read_fingerprint_csv(const std::string& path);

void write_fingerprint_csv(const std::string& path,
                           const std::vector<std::string>& ap_names,
                           const std::vector<CsvRow>& rows,
                           bool with_attacked_column = false);

// Dataset directory layout: <dir>/manifest.txt + train.csv + test.csv.
void save_dataset(const FloorplanDataset& d, const std::string& dir);

// Accepts a dataset directory, a manifest path, or a bare fingerprint CSV.
// Bare CSVs are split by the collection protocol: for the designated device
// the last sample of each reference point becomes test and the rest train;
// other devices contribute test rows only.
FloorplanDataset load_dataset(const std::string& path,
                              const std::string& designated_device = "");

bool datasets_equal(const FloorplanDataset& a, const FloorplanDataset& b);

std::vector<CsvRow> dataset_rows(const FloorplanDataset& d, bool test_split);

}  // namespace cal
