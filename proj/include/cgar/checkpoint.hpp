#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cgar/model.hpp"
#include "cgar/optimizer.hpp"

namespace cgar {

// Everything needed to continue a run bit-for-bit: model tensors by name,
// optimizer moments, the data-sampling RNG stream state and an echo of the
// resolved config.
struct CheckpointRecord {
    ModelDims dims;
    std::vector<std::pair<std::string, Tensor>> params;
    OptimizerState opt;
    long epoch = 0;
    long cum_block_apps = 0;
    std::string rng_state;
    std::string config_echo;
};

// Binary format: magic, format version, payload length, payload, FNV-1a
// checksum of the payload. Values are stored as 64-bit floats regardless
// of the build's scalar type.
void save_checkpoint(const std::string& path, const CheckpointRecord& rec);

// Throws IoError for a missing file, bad magic, unsupported version,
// truncation or checksum mismatch.
CheckpointRecord load_checkpoint(const std::string& path);

CheckpointRecord snapshot(const Model& model, const OptimizerState& opt, long epoch,
                          long cum_block_apps, const std::string& rng_state,
                          const std::string& config_echo);

}  // namespace cgar
