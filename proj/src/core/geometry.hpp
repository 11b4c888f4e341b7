#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <mutex>

#include "core/autograd.hpp"
#include "core/ops.hpp"

namespace gadan::geometry {

enum class TransformKind { affine, homography, tps };

constexpr int kDefaultTpsGrid = 4;  // 4x4 control grid, K = 16
constexpr double kDetEps = 1e-8;

const char* kind_name(TransformKind kind);
TransformKind kind_from_name(const std::string& name);

/// Free-parameter count: 6 (affine), 8 (homography), 2K (tps).
int param_count(TransformKind kind, int tps_grid = kDefaultTpsGrid);

/// Precomputed thin-plate-spline machinery for one control grid: the regular
/// source control points over [-0.9, 0.9]^2, the identity coefficients, and
/// the linear map from control displacements to interpolation coefficients
/// (the kernel system solved once, radial kernel U(r) = r^2 log r^2).
class TpsBasis {
public:
    static std::shared_ptr<const TpsBasis> get(int grid_n);

    int grid_n() const { return grid_n_; }
    int num_points() const { return k_; }
    const Eigen::MatrixXd& control_points() const { return ctrl_; }      // K x 2
    const Eigen::MatrixXd& identity_coeffs() const { return base_; }     // (K+3) x 2
    const Eigen::MatrixXd& displacement_map() const { return m_disp_; }  // (K+3) x K

    /// Kernel evaluation at pixel centers of an H x W grid: (H*W) x (K+3),
    /// row p = [U(|p - c_0|) ... U(|p - c_{K-1}|), 1, x, y]. Cached per size.
    std::shared_ptr<const Eigen::MatrixXd> eval_matrix(int64_t height, int64_t width) const;

    /// Evaluate the map at one point given coefficients; the per-point oracle
    /// used inside the basis itself as well as by callers.
    Eigen::Vector2d evaluate(const Eigen::MatrixXd& coeffs, double x, double y) const;

private:
    explicit TpsBasis(int grid_n);
    int grid_n_ = 0;
    int k_ = 0;
    Eigen::MatrixXd ctrl_, base_, m_disp_;
    mutable std::mutex cache_mutex_;
    mutable std::map<std::pair<int64_t, int64_t>, std::shared_ptr<const Eigen::MatrixXd>> cache_;
};

// ---------------------------------------------------------------------------
// Value-level API (plain tensors, no gradient tape)
// ---------------------------------------------------------------------------

struct TransformParams {
    TransformKind kind;
    Eigen::VectorXd theta;  // length param_count(kind), normalized coordinates
};

struct TransformOperator {
    TransformKind kind;
    Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();  // affine/homography, (3,3) == 1
    Eigen::MatrixXd coeffs;                                // tps, (K+3) x 2
    Eigen::VectorXd rep;                                   // free-parameter representation
    std::shared_ptr<const TpsBasis> basis;                 // tps only
};

TransformParams identity_params(TransformKind kind, int tps_grid = kDefaultTpsGrid);
TransformOperator build_operator(const TransformParams& params);
TransformOperator invert_operator(const TransformOperator& op);

/// Source-coordinate sampling grid (1 x H x W x 2) for the backward warp.
Tensor generate_grid(const TransformOperator& op, int64_t height, int64_t width);

struct WarpResult {
    Tensor image;  // B x C x H x W
    Tensor mask;   // B x 1 x H x W
};

WarpResult warp(const Tensor& image, const TransformOperator& op, double fill = -1.0);
Tensor warp_mask(const Tensor& mask, const TransformOperator& op);

/// Normalized 3x3 inverse ((3,3) scaled to 1). Throws SingularTransform.
Eigen::Matrix3d normalized_inverse(const Eigen::Matrix3d& m);

// ---------------------------------------------------------------------------
// Differentiable batched layer (used by the training pipeline)
// ---------------------------------------------------------------------------

/// A batch of B operators of one kind. `rep` is always defined: theta for a
/// freshly built operator, the free entries of the normalized matrix after
/// inversion, negated displacements for an inverted TPS.
struct OperatorBatch {
    TransformKind kind;
    Variable rep;     // B x N
    Variable mat;     // B x 9 row-major (matrix kinds)
    Variable coeffs;  // B x (K+3)*2 (tps)
    std::shared_ptr<const TpsBasis> basis;
    int64_t batch() const { return rep.value().dim(0); }
};

OperatorBatch build_operator_batch(TransformKind kind, const Variable& theta,
                                   std::shared_ptr<const TpsBasis> basis = nullptr);
OperatorBatch invert_operator_batch(const OperatorBatch& op);
Variable generate_grid_batch(const OperatorBatch& op, int64_t height, int64_t width);

struct WarpVars {
    Variable image;
    Variable mask;
};

WarpVars warp_batch(const Variable& image, const OperatorBatch& op, double fill = -1.0);
Variable warp_mask_batch(const Variable& mask, const OperatorBatch& op);

/// Determinant of the matrix assembled from one parameter row; used to screen
/// near-singular predictions before graph construction.
double theta_determinant(TransformKind kind, const double* theta);

// Differentiable 3x3 building blocks (exposed for gradient checking).
Variable assemble_matrix(TransformKind kind, const Variable& theta);
Variable invert33_normalized(const Variable& mat);
Variable projective_grid(const Variable& mat, int64_t height, int64_t width);
Variable tps_coefficients(const Variable& theta, const std::shared_ptr<const TpsBasis>& basis);
Variable tps_grid(const Variable& coeffs, const std::shared_ptr<const TpsBasis>& basis,
                  int64_t height, int64_t width);

}  // namespace gadan::geometry
