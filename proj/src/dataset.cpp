#include "calloc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cal {

void SyntheticBuildingConfig::validate() const {
  if (n_aps < 1) throw std::invalid_argument("config: n_aps must be >= 1");
  if (path_length_m < 1.0)
    throw std::invalid_argument("config: path_length_m must be >= 1");
  if (path_loss_exponent <= 0.0)
    throw std::invalid_argument("config: path_loss_exponent must be > 0");
  if (shadowing_sigma_db < 0.0)
    throw std::invalid_argument("config: shadowing_sigma_db must be >= 0");
}

int FloorplanDataset::class_of(int rp_id) const {
  // rps is sorted by rp_id.
  auto it = std::lower_bound(rps.begin(), rps.end(), rp_id,
                             [](const ReferencePoint& rp, int id) { return rp.rp_id < id; });
  if (it == rps.end() || it->rp_id != rp_id)
    throw std::invalid_argument("dataset: unknown rp_id " + std::to_string(rp_id));
  return static_cast<int>(it - rps.begin());
}

const ReferencePoint& FloorplanDataset::rp_of_class(int cls) const {
  if (cls < 0 || cls >= n_classes())
    throw std::invalid_argument("dataset: class index out of range");
  return rps[cls];
}

std::vector<float> FloorplanDataset::train_mean_rss() const {
  if (train.empty()) throw std::invalid_argument("dataset: empty train set");
  std::vector<double> acc(ap_names.size(), 0.0);
  for (const Fingerprint& fp : train)
    for (size_t k = 0; k < acc.size(); ++k) acc[k] += fp.rss[k];
  std::vector<float> mean(acc.size());
  for (size_t k = 0; k < acc.size(); ++k)
    mean[k] = static_cast<float>(acc[k] / train.size());
  return mean;
}

void FloorplanDataset::validate() const {
  for (size_t i = 1; i < rps.size(); ++i)
    if (rps[i - 1].rp_id >= rps[i].rp_id)
      throw std::invalid_argument("dataset: rp_ids must be unique and sorted");
  auto check_rows = [&](const std::vector<Fingerprint>& rows, const char* which) {
    for (const Fingerprint& fp : rows) {
      if (static_cast<int>(fp.rss.size()) != n_aps())
        throw std::invalid_argument(std::string("dataset: ") + which +
                                    " row width does not match roster");
      for (float r : fp.rss)
        if (r < kRssFloorDbm || r > kRssCeilDbm)
          throw std::invalid_argument(std::string("dataset: ") + which +
                                      " rss out of [-100,0]");
      class_of(fp.rp_id);
    }
  };
  check_rows(train, "train");
  check_rows(test, "test");
}

float normalize_dbm(float rss_dbm) {
  if (rss_dbm < kRssFloorDbm || rss_dbm > kRssCeilDbm)
    throw std::invalid_argument("normalize: rss out of [-100,0] dBm");
  return (rss_dbm + 100.0f) / 100.0f;
}

float denormalize_dbm(float x) { return x * 100.0f - 100.0f; }

std::vector<float> normalize(const Fingerprint& fp) {
  std::vector<float> out(fp.rss.size());
  for (size_t i = 0; i < fp.rss.size(); ++i) out[i] = normalize_dbm(fp.rss[i]);
  return out;
}

Fingerprint apply_device_profile(const Fingerprint& fp, const DeviceProfile& profile,
                                 uint64_t seed) {
  Fingerprint out = fp;
  out.device = profile.name;
  if (profile.is_identity()) return out;
  RngStream rng(seed);
  for (float& r : out.rss) {
    if (r == kRssFloorDbm) continue;  // unheard APs stay unheard
    float v = kRssFloorDbm + profile.gain * (r + 100.0f) + profile.offset_db;
    if (profile.noise_sigma_db > 0.0f)
      v += profile.noise_sigma_db * static_cast<float>(rng.next_normal());
    r = std::clamp(v, kRssFloorDbm, kRssCeilDbm);
  }
  return out;
}

std::vector<DeviceProfile> default_device_profiles(uint64_t meta_seed) {
  static const char* kNames[] = {"BLU", "HTC", "S7", "LG", "MOTO"};
  std::vector<DeviceProfile> out;
  RngStream rng(meta_seed);
  uint64_t slot = 0;
  for (const char* name : kNames) {
    RngStream s = rng.derive(++slot);
    DeviceProfile p;
    p.name = name;
    p.gain = static_cast<float>(0.9 + 0.2 * s.next_uniform());
    p.offset_db = static_cast<float>(-4.0 + 8.0 * s.next_uniform());
    p.noise_sigma_db = static_cast<float>(2.0 * s.next_uniform());
    out.push_back(p);
  }
  out.push_back(DeviceProfile{"OP3", 1.0f, 0.0f, 0.0f});
  return out;
}

namespace {

LabeledMatrix to_matrix(const FloorplanDataset& d, const std::vector<Fingerprint>& rows,
                        const std::string& device) {
  std::vector<const Fingerprint*> keep;
  for (const Fingerprint& fp : rows)
    if (device.empty() || fp.device == device) keep.push_back(&fp);
  LabeledMatrix out;
  out.x = Tensor(static_cast<int>(keep.size()), d.n_aps());
  out.labels.resize(keep.size());
  for (size_t i = 0; i < keep.size(); ++i) {
    const std::vector<float> norm = normalize(*keep[i]);
    std::copy(norm.begin(), norm.end(), out.x.row_ptr(static_cast<int>(i)));
    out.labels[i] = d.class_of(keep[i]->rp_id);
  }
  return out;
}

}  // namespace

LabeledMatrix normalized_train(const FloorplanDataset& d) {
  return to_matrix(d, d.train, "");
}

LabeledMatrix normalized_test(const FloorplanDataset& d, const std::string& device) {
  return to_matrix(d, d.test, device);
}

FloorplanDataset fit_roster_width(const FloorplanDataset& d, int n_target) {
  if (n_target < 1) throw std::invalid_argument("fit_roster_width: n_target must be >= 1");
  if (n_target == d.n_aps()) return d;
  FloorplanDataset out = d;
  if (n_target > d.n_aps()) {
    // Pad with APs that are never heard.
    for (int k = d.n_aps(); k < n_target; ++k)
      out.ap_names.push_back("pad_" + std::to_string(k));
    auto pad_rows = [&](std::vector<Fingerprint>& rows) {
      for (Fingerprint& fp : rows) fp.rss.resize(n_target, kRssFloorDbm);
    };
    pad_rows(out.train);
    pad_rows(out.test);
  } else {
    // Keep the n_target APs with the strongest mean train-set rss, preserving
    // their original roster order.
    const std::vector<float> mean = d.train_mean_rss();
    std::vector<int> idx(d.n_aps());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return mean[a] > mean[b]; });
    idx.resize(n_target);
    std::sort(idx.begin(), idx.end());
    out.ap_names.clear();
    for (int k : idx) out.ap_names.push_back(d.ap_names[k]);
    auto cut_rows = [&](std::vector<Fingerprint>& rows, const std::vector<Fingerprint>& src) {
      rows.clear();
      for (const Fingerprint& fp : src) {
        Fingerprint nf;
        nf.rp_id = fp.rp_id;
        nf.device = fp.device;
        nf.rss.reserve(n_target);
        for (int k : idx) nf.rss.push_back(fp.rss[k]);
        rows.push_back(std::move(nf));
      }
    };
    cut_rows(out.train, d.train);
    cut_rows(out.test, d.test);
  }
  out.gen.n_aps = n_target;
  return out;
}

}  // namespace cal
