#include "calloc/synthetic.hpp"

#include <cmath>
#include <stdexcept>

namespace cal {

namespace {

struct ApSite {
  double x, y;
};

constexpr double kMinDistanceM = 0.1;  // keeps log10 finite at an AP's foot
constexpr double kCorridorHalfWidthM = 3.0;

}  // namespace

float path_loss_rss_dbm(double distance_m, const SyntheticBuildingConfig& config) {
  const double d = std::max(distance_m, kMinDistanceM);
  const double rss =
      config.ref_power_dbm - 10.0 * config.path_loss_exponent * std::log10(d);
  return std::clamp(static_cast<float>(rss), kRssFloorDbm, kRssCeilDbm);
}

FloorplanDataset generate_synthetic_building(const SyntheticBuildingConfig& config,
                                             const std::vector<DeviceProfile>& devices) {
  config.validate();
  if (devices.empty())
    throw std::invalid_argument("generate_synthetic_building: no device profiles");

  FloorplanDataset d;
  d.name = config.name;
  d.gen = config;
  for (int k = 0; k < config.n_aps; ++k) d.ap_names.push_back("ap_" + std::to_string(k));

  const int n_rps = static_cast<int>(std::floor(config.path_length_m)) + 1;
  for (int i = 0; i < n_rps; ++i)
    d.rps.push_back(ReferencePoint{i, static_cast<float>(i), 0.0f});

  RngStream root(config.rng_seed);
  RngStream site_rng = root.derive(1);
  std::vector<ApSite> sites;
  sites.reserve(config.n_aps);
  for (int k = 0; k < config.n_aps; ++k) {
    ApSite s;
    s.x = site_rng.next_uniform() * config.path_length_m;
    s.y = (site_rng.next_uniform() * 2.0 - 1.0) * kCorridorHalfWidthM;
    sites.push_back(s);
  }

  auto base_scan = [&](const ReferencePoint& rp, RngStream& noise) {
    Fingerprint fp;
    fp.rp_id = rp.rp_id;
    fp.rss.reserve(config.n_aps);
    for (int k = 0; k < config.n_aps; ++k) {
      const double dx = rp.x_m - sites[k].x;
      const double dy = rp.y_m - sites[k].y;
      float rss = path_loss_rss_dbm(std::hypot(dx, dy), config);
      if (config.shadowing_sigma_db > 0.0)
        rss += static_cast<float>(config.shadowing_sigma_db * noise.next_normal());
      fp.rss.push_back(std::clamp(rss, kRssFloorDbm, kRssCeilDbm));
    }
    return fp;
  };

  // Designated device captures the train set. The OP3 identity profile is the
  // conventional choice when present.
  const DeviceProfile* designated = &devices.back();
  for (const DeviceProfile& p : devices)
    if (p.name == "OP3") designated = &p;
  d.designated_device = designated->name;
  for (const DeviceProfile& p : devices) d.devices.push_back(p.name);

  for (const ReferencePoint& rp : d.rps) {
    RngStream train_rng = root.derive(1000 + static_cast<uint64_t>(rp.rp_id));
    for (int s = 0; s < kTrainSamplesPerRp; ++s) {
      Fingerprint fp = base_scan(rp, train_rng);
      fp = apply_device_profile(fp, *designated, train_rng.next_u64());
      d.train.push_back(std::move(fp));
    }
  }

  for (const ReferencePoint& rp : d.rps) {
    for (size_t di = 0; di < devices.size(); ++di) {
      RngStream test_rng =
          root.derive(2000000 + static_cast<uint64_t>(rp.rp_id) * 64 + di);
      Fingerprint fp = base_scan(rp, test_rng);
      fp = apply_device_profile(fp, devices[di], test_rng.next_u64());
      d.test.push_back(std::move(fp));
    }
  }

  d.validate();
  return d;
}

SyntheticBuildingConfig building_preset(int number, uint64_t seed) {
  static const int kAps[] = {156, 125, 78, 112, 218};
  static const int kPathM[] = {64, 62, 88, 68, 60};
  if (number < 1 || number > 5)
    throw std::invalid_argument("building_preset: number must be 1..5");
  SyntheticBuildingConfig c;
  c.n_aps = kAps[number - 1];
  c.path_length_m = kPathM[number - 1];
  c.rng_seed = seed;
  c.name = "building" + std::to_string(number);
  return c;
}

}  // namespace cal
