#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace gadan::checkpoint {

constexpr uint32_t kFormatVersion = 1;

struct AdamStateBlob {
    int64_t t = 0;
    std::vector<Tensor> m, v;
};

/// Versioned training snapshot: step counter, embedded config, named weight
/// groups, optimizer state and RNG/cursor states. Loading refuses any other
/// format version. Saving the result of a load reproduces the bytes exactly.
struct CheckpointData {
    int64_t step = 0;
    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> weights;
    bool has_optimizer = false;
    AdamStateBlob opt_g, opt_d;
    std::string rng_state;
    std::string cursor_x, cursor_y;
};

void save(const std::string& path, const CheckpointData& data);
CheckpointData load(const std::string& path);

}  // namespace gadan::checkpoint
