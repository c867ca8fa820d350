#include "calloc/csv_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "calloc/kvconfig.hpp"
#include "calloc/synthetic.hpp"

namespace fs = std::filesystem;

namespace cal {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

float parse_rss(const std::string& s, const std::string& path, int lineno) {
  if (s.empty()) return kRssFloorDbm;  // AP absent from this row
  size_t pos = 0;
  float v;
  try {
    v = std::stof(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error(path + ":" + std::to_string(lineno) +
                             ": non-numeric rss value '" + s + "'");
  }
  if (pos != s.size())
    throw std::runtime_error(path + ":" + std::to_string(lineno) +
                             ": non-numeric rss value '" + s + "'");
  if (v < kRssFloorDbm || v > kRssCeilDbm)
    throw std::runtime_error(path + ":" + std::to_string(lineno) +
                             ": rss out of [-100,0]: " + s);
  return v;
}

// Remaps a table's AP columns onto a target roster. Columns unknown to the
// roster are dropped (with a warning); roster APs missing from the table are
// filled with -100.
void remap_to_roster(CsvTable& t, const std::vector<std::string>& roster,
                     const std::string& path) {
  if (t.ap_names == roster) return;
  std::map<std::string, int> col_of;
  for (size_t i = 0; i < t.ap_names.size(); ++i) col_of[t.ap_names[i]] = static_cast<int>(i);
  int dropped = 0;
  for (const std::string& name : t.ap_names)
    if (std::find(roster.begin(), roster.end(), name) == roster.end()) ++dropped;
  if (dropped > 0)
    std::cerr << "warning: " << path << ": dropping " << dropped
              << " AP column(s) not in the dataset roster\n";
  for (CsvRow& row : t.rows) {
    std::vector<float> mapped(roster.size(), kRssFloorDbm);
    for (size_t k = 0; k < roster.size(); ++k) {
      auto it = col_of.find(roster[k]);
      if (it != col_of.end()) mapped[k] = row.rss[it->second];
    }
    row.rss = std::move(mapped);
  }
  t.ap_names = roster;
}

}  // namespace

CsvTable read_fingerprint_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_line(line);
  if (header.size() < 5 || header[0] != "rp_id" || header[1] != "device" ||
      header[2] != "x_m" || header[3] != "y_m")
    throw std::runtime_error("csv: malformed header in " + path +
                             " (want rp_id,device,x_m,y_m,ap_...)");
  CsvTable t;
  size_t n_cols = header.size();
  if (header.back() == "attacked") {
    t.has_attacked_column = true;
    header.pop_back();
  }
  t.ap_names.assign(header.begin() + 4, header.end());
  for (const std::string& ap : t.ap_names)
    if (ap.empty()) throw std::runtime_error("csv: empty AP column name in " + path);

  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = split_line(line);
    if (fields.size() != n_cols)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": column count mismatch with header");
    CsvRow row;
    try {
      row.rp_id = std::stoi(fields[0]);
      row.x_m = std::stof(fields[2]);
      row.y_m = std::stof(fields[3]);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": non-numeric rp_id or coordinate");
    }
    row.device = fields[1];
    row.rss.reserve(t.ap_names.size());
    for (size_t k = 0; k < t.ap_names.size(); ++k)
      row.rss.push_back(parse_rss(fields[4 + k], path, lineno));
    if (t.has_attacked_column) row.attacked = fields.back() == "1" ? 1 : 0;
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_fingerprint_csv(const std::string& path,
                           const std::vector<std::string>& ap_names,
                           const std::vector<CsvRow>& rows,
                           bool with_attacked_column) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("csv: cannot write " + path);
  f << "rp_id,device,x_m,y_m";
  for (const std::string& ap : ap_names) f << ',' << ap;
  if (with_attacked_column) f << ",attacked";
  f << '\n';
  for (const CsvRow& r : rows) {
    f << r.rp_id << ',' << r.device << ',' << format_float32(r.x_m) << ','
      << format_float32(r.y_m);
    for (float v : r.rss) f << ',' << format_float32(v);
    if (with_attacked_column) f << ',' << r.attacked;
    f << '\n';
  }
  if (!f) throw std::runtime_error("csv: write failed for " + path);
}

std::vector<CsvRow> dataset_rows(const FloorplanDataset& d, bool test_split) {
  const std::vector<Fingerprint>& src = test_split ? d.test : d.train;
  std::vector<CsvRow> rows;
  rows.reserve(src.size());
  for (const Fingerprint& fp : src) {
    const ReferencePoint& rp = d.rps[d.class_of(fp.rp_id)];
    CsvRow r;
    r.rp_id = fp.rp_id;
    r.device = fp.device;
    r.x_m = rp.x_m;
    r.y_m = rp.y_m;
    r.rss = fp.rss;
    rows.push_back(std::move(r));
  }
  return rows;
}

void save_dataset(const FloorplanDataset& d, const std::string& dir) {
  fs::create_directories(dir);
  write_fingerprint_csv((fs::path(dir) / "train.csv").string(), d.ap_names,
                        dataset_rows(d, false));
  write_fingerprint_csv((fs::path(dir) / "test.csv").string(), d.ap_names,
                        dataset_rows(d, true));
  KvConfig m;
  m.set("name", d.name);
  m.set_i("n_aps", d.n_aps());
  std::string roster;
  for (size_t i = 0; i < d.ap_names.size(); ++i) {
    if (i) roster += ",";
    roster += d.ap_names[i];
  }
  m.set("ap_roster", roster);
  m.set_u("seed", d.gen.rng_seed);
  m.set_f("path_length_m", d.gen.path_length_m);
  m.set_f("path_loss_exponent", d.gen.path_loss_exponent);
  m.set_f("ref_power_dbm", d.gen.ref_power_dbm);
  m.set_f("shadowing_sigma_db", d.gen.shadowing_sigma_db);
  m.set("designated_device", d.designated_device);
  std::string devs;
  for (size_t i = 0; i < d.devices.size(); ++i) {
    if (i) devs += ",";
    devs += d.devices[i];
  }
  m.set("devices", devs);
  m.set_i("train_samples_per_rp", kTrainSamplesPerRp);
  m.set_i("test_samples_per_rp_per_device", kTestSamplesPerRpPerDevice);
  m.set("train_csv", "train.csv");
  m.set("test_csv", "test.csv");
  m.write_file((fs::path(dir) / "manifest.txt").string());
}

namespace {

void add_reference_points(FloorplanDataset& d, const std::vector<CsvRow>& rows) {
  std::map<int, std::pair<float, float>> coords;
  for (const CsvRow& r : rows) {
    auto it = coords.find(r.rp_id);
    if (it == coords.end()) {
      coords[r.rp_id] = {r.x_m, r.y_m};
    } else if (it->second.first != r.x_m || it->second.second != r.y_m) {
      throw std::runtime_error("dataset: conflicting coordinates for rp_id " +
                               std::to_string(r.rp_id));
    }
  }
  for (const auto& [rp_id, xy] : coords)
    d.rps.push_back(ReferencePoint{rp_id, xy.first, xy.second});
}

void enforce_sample_limits(const std::vector<CsvRow>& rows, int limit,
                           const std::string& path) {
  std::map<std::pair<int, std::string>, int> counts;
  for (const CsvRow& r : rows) {
    int& c = counts[{r.rp_id, r.device}];
    if (++c > limit)
      throw std::runtime_error(path + ": duplicate rows for rp_id " +
                               std::to_string(r.rp_id) + ", device " + r.device +
                               " (more than " + std::to_string(limit) +
                               " samples)");
  }
}

FloorplanDataset load_from_manifest(const fs::path& manifest_path) {
  const KvConfig m = KvConfig::parse_file(manifest_path.string());
  const fs::path dir = manifest_path.parent_path();
  FloorplanDataset d;
  d.name = m.get_or("name", "dataset");
  d.ap_names = m.get_list("ap_roster");
  if (d.ap_names.empty()) throw std::runtime_error("manifest: empty ap_roster");
  d.designated_device = m.get_or("designated_device", "OP3");
  if (m.has("devices")) d.devices = m.get_list("devices");
  d.gen.n_aps = static_cast<int>(d.ap_names.size());
  d.gen.rng_seed = m.get_u_or("seed", 0);
  d.gen.path_length_m = m.get_f_or("path_length_m", 1.0);
  d.gen.path_loss_exponent = m.get_f_or("path_loss_exponent", 3.0);
  d.gen.ref_power_dbm = m.get_f_or("ref_power_dbm", -30.0);
  d.gen.shadowing_sigma_db = m.get_f_or("shadowing_sigma_db", 4.0);
  d.gen.name = d.name;

  const int train_limit = static_cast<int>(m.get_i_or("train_samples_per_rp", kTrainSamplesPerRp));
  const int test_limit =
      static_cast<int>(m.get_i_or("test_samples_per_rp_per_device", kTestSamplesPerRpPerDevice));

  const std::string train_path = (dir / m.get_or("train_csv", "train.csv")).string();
  const std::string test_path = (dir / m.get_or("test_csv", "test.csv")).string();
  CsvTable train = read_fingerprint_csv(train_path);
  CsvTable test = read_fingerprint_csv(test_path);
  remap_to_roster(train, d.ap_names, train_path);
  remap_to_roster(test, d.ap_names, test_path);
  enforce_sample_limits(train.rows, train_limit, train_path);
  enforce_sample_limits(test.rows, test_limit, test_path);

  add_reference_points(d, train.rows);
  std::map<int, bool> seen;
  for (const ReferencePoint& rp : d.rps) seen[rp.rp_id] = true;
  std::vector<CsvRow> extra;
  for (const CsvRow& r : test.rows)
    if (!seen.count(r.rp_id)) extra.push_back(r);
  add_reference_points(d, extra);
  std::sort(d.rps.begin(), d.rps.end(),
            [](const ReferencePoint& a, const ReferencePoint& b) { return a.rp_id < b.rp_id; });

  for (const CsvRow& r : train.rows)
    d.train.push_back(Fingerprint{r.rss, r.rp_id, r.device});
  for (const CsvRow& r : test.rows)
    d.test.push_back(Fingerprint{r.rss, r.rp_id, r.device});
  if (d.devices.empty()) {
    std::map<std::string, bool> dev;
    for (const Fingerprint& fp : d.test) dev[fp.device] = true;
    for (const auto& [name, _] : dev) d.devices.push_back(name);
  }
  d.validate();
  return d;
}

FloorplanDataset load_from_bare_csv(const std::string& path,
                                    const std::string& designated) {
  CsvTable t = read_fingerprint_csv(path);
  FloorplanDataset d;
  d.name = fs::path(path).stem().string();
  d.ap_names = t.ap_names;
  d.gen.n_aps = static_cast<int>(t.ap_names.size());
  d.gen.path_length_m = 1.0;

  std::map<std::string, int> dev_counts;
  for (const CsvRow& r : t.rows) dev_counts[r.device]++;
  if (dev_counts.empty()) throw std::runtime_error("csv: no data rows in " + path);
  std::string chosen = designated;
  if (chosen.empty()) {
    for (const auto& [name, count] : dev_counts)
      if (chosen.empty() || count > dev_counts[chosen]) chosen = name;
  } else if (!dev_counts.count(chosen)) {
    throw std::runtime_error("csv: designated device '" + chosen + "' has no rows");
  }
  d.designated_device = chosen;
  for (const auto& [name, _] : dev_counts) d.devices.push_back(name);

  add_reference_points(d, t.rows);
  std::sort(d.rps.begin(), d.rps.end(),
            [](const ReferencePoint& a, const ReferencePoint& b) { return a.rp_id < b.rp_id; });

  // Protocol split: last sample per (rp, designated) is test, the rest train;
  // every other device is test-only.
  std::map<int, std::vector<const CsvRow*>> designated_rows;
  for (const CsvRow& r : t.rows) {
    if (r.device == chosen)
      designated_rows[r.rp_id].push_back(&r);
    else
      d.test.push_back(Fingerprint{r.rss, r.rp_id, r.device});
  }
  for (const auto& [rp_id, rows] : designated_rows) {
    for (size_t i = 0; i + 1 < rows.size(); ++i)
      d.train.push_back(Fingerprint{rows[i]->rss, rp_id, rows[i]->device});
    d.test.push_back(Fingerprint{rows.back()->rss, rp_id, rows.back()->device});
  }
  d.validate();
  return d;
}

}  // namespace

FloorplanDataset load_dataset(const std::string& path, const std::string& designated_device) {
  fs::path p(path);
  if (fs::is_directory(p)) return load_from_manifest(p / "manifest.txt");
  if (p.filename() == "manifest.txt" || p.extension() == ".manifest")
    return load_from_manifest(p);
  if (p.extension() == ".csv") return load_from_bare_csv(path, designated_device);
  throw std::runtime_error("load_dataset: expected a dataset directory, manifest, or .csv: " +
                           path);
}

bool datasets_equal(const FloorplanDataset& a, const FloorplanDataset& b) {
  auto rows_equal = [](const std::vector<Fingerprint>& x, const std::vector<Fingerprint>& y) {
    if (x.size() != y.size()) return false;
    for (size_t i = 0; i < x.size(); ++i) {
      if (x[i].rp_id != y[i].rp_id || x[i].device != y[i].device || x[i].rss != y[i].rss)
        return false;
    }
    return true;
  };
  if (a.name != b.name || a.ap_names != b.ap_names) return false;
  if (a.rps.size() != b.rps.size()) return false;
  for (size_t i = 0; i < a.rps.size(); ++i) {
    if (a.rps[i].rp_id != b.rps[i].rp_id || a.rps[i].x_m != b.rps[i].x_m ||
        a.rps[i].y_m != b.rps[i].y_m)
      return false;
  }
  return rows_equal(a.train, b.train) && rows_equal(a.test, b.test);
}

}  // namespace cal
