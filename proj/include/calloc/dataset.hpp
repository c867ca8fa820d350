#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calloc/rng.hpp"
#include "calloc/tensor.hpp"

namespace cal {

// RSS floor in dBm. Doubles as the sentinel for APs not heard at a location.
constexpr float kRssFloorDbm = -100.0f;
constexpr float kRssCeilDbm = 0.0f;

// A surveyed location with known coordinates; the classification target.
struct ReferencePoint {
  int rp_id = 0;
  float x_m = 0.0f;
  float y_m = 0.0f;
};

// One RSS scan: dBm per AP in the building roster, tagged with its reference
// point and the device that captured it.
struct Fingerprint {
  std::vector<float> rss;
  int rp_id = 0;
  std::string device;
};

// Affine dBm transform + Gaussian jitter modelling chipset/firmware disparity
// between devices. gain acts on the offset from the -100 dBm floor.
struct DeviceProfile {
  std::string name;
  float gain = 1.0f;
  float offset_db = 0.0f;
  float noise_sigma_db = 0.0f;

  bool is_identity() const {
    return gain == 1.0f && offset_db == 0.0f && noise_sigma_db == 0.0f;
  }
};

struct SyntheticBuildingConfig {
  int n_aps = 0;
  double path_length_m = 0.0;
  uint64_t rng_seed = 0;
  // Log-distance propagation parameters.
  double path_loss_exponent = 3.0;
  double ref_power_dbm = -30.0;   // received power at d0 = 1 m
  double shadowing_sigma_db = 4.0;
  std::string name = "building";

  void validate() const;
};

// All data for one building: AP roster, reference points, and fingerprints
// split into train (designated device only) and test (one row per RP per
// device). Immutable after construction; safe to share across readers.
struct FloorplanDataset {
  std::string name;
  std::vector<std::string> ap_names;  // roster, ordered; defines rss layout
  std::vector<ReferencePoint> rps;    // sorted by rp_id
  std::vector<Fingerprint> train;
  std::vector<Fingerprint> test;
  std::string designated_device;
  std::vector<std::string> devices;
  SyntheticBuildingConfig gen;  // generator parameters, echoed in the manifest

  int n_aps() const { return static_cast<int>(ap_names.size()); }
  int n_classes() const { return static_cast<int>(rps.size()); }

  // Class index (dense 0..C-1) for an rp_id; throws on unknown ids.
  int class_of(int rp_id) const;
  const ReferencePoint& rp_of_class(int cls) const;

  // Per-AP mean train-set rss in dBm.
  std::vector<float> train_mean_rss() const;

  void validate() const;
};

// (rss + 100) / 100, elementwise; rejects out-of-range dBm.
std::vector<float> normalize(const Fingerprint& fp);
float normalize_dbm(float rss_dbm);
float denormalize_dbm(float x);

// rss' = clamp(-100 + gain*(rss+100) + offset + N(0, sigma), -100, 0);
// entries at the -100 sentinel stay there.
Fingerprint apply_device_profile(const Fingerprint& fp, const DeviceProfile& profile,
                                 uint64_t seed);

// The six evaluation handsets. OP3 is the identity profile; the others are
// drawn once from a seeded meta-distribution (gain in [0.9,1.1], offset in
// [-4,+4] dBm, sigma in [0,2] dB).
std::vector<DeviceProfile> default_device_profiles(uint64_t meta_seed = 0xCA110C);

// Normalized train/test matrices plus class labels, ready for the model.
struct LabeledMatrix {
  Tensor x;                 // rows x n_aps, in [0,1]
  std::vector<int> labels;  // class indices
};
LabeledMatrix normalized_train(const FloorplanDataset& d);
LabeledMatrix normalized_test(const FloorplanDataset& d, const std::string& device = "");

// Adapts a dataset to a fixed roster width: narrower rosters are padded with
// always-missing APs, wider ones keep the n_target strongest-mean APs.
FloorplanDataset fit_roster_width(const FloorplanDataset& d, int n_target);

}  // namespace cal
