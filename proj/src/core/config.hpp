#pragma once

#include <cstdint>
#include <string>

#include "core/losses.hpp"
#include "core/networks.hpp"

namespace gadan::pipeline {

struct TrainConfig {
    geometry::TransformKind kind = geometry::TransformKind::homography;
    int tps_grid = 4;
    int image_size = 256;
    int code_dim = 16;
    int channels = 3;
    int loc_size = 256;
    int ngf = 64;
    int ndf = 64;
    int n_res = -1;  // auto
    int batch_size = 0;
    int64_t steps = -1;
    double lr_g = 0.0;
    double lr_d = 0.0;
    losses::LossWeights weights;
    uint64_t seed = 0;
    std::string domain_x_dir, domain_y_dir, checkpoint_dir;
    int64_t checkpoint_every = 0;
    std::string metrics_path;  // empty: <checkpoint_dir>/metrics.jsonl
    bool use_replay_buffer = false;

    networks::NetConfig net_config() const;
    std::string resolved_metrics_path() const;
    void validate() const;

    /// Canonical key=value serialization (embedded in checkpoints).
    std::string serialize() const;
};

/// Parse a flat key=value file. Unknown keys, bad values and missing
/// required keys raise ConfigError naming the key and line.
TrainConfig parse_config(const std::string& path);
TrainConfig parse_config_text(const std::string& text, const std::string& origin);

}  // namespace gadan::pipeline
