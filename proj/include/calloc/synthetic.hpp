#pragma once

#include "calloc/dataset.hpp"

namespace cal {

// Generates a corridor building: reference points every 1 m along a straight
// path, APs scattered along it, log-distance path loss with lognormal
// shadowing. Deterministic under config.rng_seed. Train rows come from the
// designated device (last profile named OP3 by default), 5 per RP; test rows
// are 1 per RP per device.
FloorplanDataset generate_synthetic_building(const SyntheticBuildingConfig& config,
                                             const std::vector<DeviceProfile>& devices);

// Expected rss (no shadowing) at distance d for the given config.
float path_loss_rss_dbm(double distance_m, const SyntheticBuildingConfig& config);

// Table-style presets for the five evaluation buildings (visible APs / path
// length): 156/64, 125/62, 78/88, 112/68, 218/60.
SyntheticBuildingConfig building_preset(int number, uint64_t seed);

constexpr int kTrainSamplesPerRp = 5;
constexpr int kTestSamplesPerRpPerDevice = 1;

}  // namespace cal
