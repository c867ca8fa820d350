#pragma once

#include <string>

#include "calloc/model.hpp"

namespace cal {

// Binary model checkpoint.
//
// Layout (all integers little-endian):
//   magic   8 bytes  "CALCKPT\n"
//   version u32      currently 1
//   n_in, emb_dim, key_dim, n_classes, n_memory  u32 each
//   seed    u64      init seed of the saved model
//   lesson  u32      last completed curriculum lesson (0 = untrained)
//   n_arrays u32, then per array:
//     name_len u16, name bytes, rows u32, cols u32, rows*cols float32 (LE)
//
// Only parameters are stored; the anchor memory is rebuilt from training data
// after load (rebuild_anchor_memory), which reproduces the saved model's
// forward pass bit-for-bit since caching runs in eval mode. n_memory records
// the expected memory row count so callers can verify they rebuilt against
// the same training set.
inline constexpr char kCheckpointMagic[8] = {'C', 'A', 'L', 'C', 'K', 'P', 'T', '\n'};
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const CallocModel& model, const std::string& path);

struct LoadedCheckpoint {
  CallocModel model;  // memory not yet rebuilt
  int n_memory = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace cal
