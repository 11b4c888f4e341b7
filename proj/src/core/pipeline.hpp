#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/data_io.hpp"
#include "core/losses.hpp"
#include "core/networks.hpp"

namespace gadan::pipeline {

enum class Direction { x2y, y2x };
const char* direction_name(Direction d);

/// Every intermediate of one source -> target -> source pass. Fields are
/// named for the X->Y direction; in Y->X the roles swap symmetrically.
struct CycleBundle {
    Direction direction = Direction::x2y;
    Variable x;     // source batch
    Variable code;  // spatial code, shared by the forward and recovery passes
    geometry::OperatorBatch h_xy;      // forward transform
    Variable transformed;              // warp(x, h_xy)
    Variable m;                        // forward validity mask
    Variable completed;                // background-completed
    Variable adapted;                  // appearance-translated
    geometry::OperatorBatch h_xy_inv;  // exact inverse of h_xy
    Variable x_rec_inv;                // recovery through the inverse matrix
    geometry::OperatorBatch h_sy;      // recovery transform predicted from adapted
    Variable x_rec_pred;               // recovery through the predicted transform
    Variable m_roundtrip;              // warp_mask(m, h_xy_inv)
};

struct StepMetrics {
    int64_t step = 0;
    losses::CycleLossReport x2y, y2x;
};

class Adam {
public:
    Adam() = default;
    Adam(networks::ParamList params, double lr, double beta1 = 0.5, double beta2 = 0.999,
         double eps = 1e-8);
    void zero_grad();
    void step();
    checkpoint::AdamStateBlob state() const;
    void restore(const checkpoint::AdamStateBlob& blob);

private:
    networks::ParamList params_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
    double lr_ = 0.0, b1_ = 0.5, b2_ = 0.999, eps_ = 1e-8;
};

/// Mixes current fakes with a buffer of past ones for discriminator updates.
class ImagePool {
public:
    explicit ImagePool(size_t capacity = 50) : capacity_(capacity) {}
    Tensor query(const Tensor& batch, Rng& rng);

private:
    size_t capacity_;
    std::vector<Tensor> images_;  // 1 x C x H x W entries
};

class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);
    Trainer(const TrainConfig& cfg, const std::string& resume_checkpoint);

    const TrainConfig& config() const { return cfg_; }
    int64_t step() const { return step_; }
    networks::Nets& nets() { return nets_; }
    const networks::Nets& nets() const { return nets_; }

    CycleBundle run_cycle(const Variable& x, const Variable& code, Direction direction) const;
    StepMetrics train_step(const Tensor& batch_x, const Tensor& batch_y);

    /// Full training run per config: deterministic batch streams, metrics
    /// log, checkpoints at the configured cadence plus a final one. Returns
    /// the final checkpoint path.
    std::string train(const std::function<void(const StepMetrics&)>& on_step = {});

    void save_checkpoint_file(const std::string& path) const;
    Tensor sample_codes(int64_t batch);

private:
    void bind_optimizers();

    TrainConfig cfg_;
    networks::Nets nets_;
    networks::ParamList gen_params_, disc_params_;
    Adam opt_g_, opt_d_;
    Rng rng_;
    data_io::BatchCursor cursor_x_, cursor_y_;
    ImagePool pool_x_, pool_y_;
    int64_t step_ = 0;
};

/// Inference view of a checkpoint: config plus weights, no optimizer.
struct LoadedModel {
    TrainConfig config;
    networks::Nets nets;
};

LoadedModel load_model(const std::string& checkpoint_path);

/// Forward adaptation only (localize, warp, complete, translate).
Tensor adapt(const LoadedModel& model, const Tensor& image, const Tensor& code);

/// The 1-to-N protocol: n codes from a seeded standard normal.
std::vector<Tensor> adapt_multi(const LoadedModel& model, const Tensor& image, int n,
                                uint64_t seed);

}  // namespace gadan::pipeline
