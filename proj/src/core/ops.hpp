#pragma once

#include "core/autograd.hpp"

namespace gadan::ops {

// ---- elementwise ----
Variable add(const Variable& a, const Variable& b);
Variable sub(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable scale(const Variable& a, double s);
Variable add_scalar(const Variable& a, double s);
/// x (B,C,H,W) * m (B,1,H,W), mask broadcast over channels.
Variable mul_mask(const Variable& x, const Variable& m);
Variable tanh(const Variable& a);
Variable relu(const Variable& a);
Variable leaky_relu(const Variable& a, double slope);

// ---- shape ----
Variable reshape(const Variable& a, std::vector<int64_t> shape);
/// Concatenate along dim 1 (channels / features); other dims must match.
Variable concat_dim1(const Variable& a, const Variable& b);
/// Columns [start, start+len) of dim 1.
Variable slice_dim1(const Variable& a, int64_t start, int64_t len);

// ---- reductions / losses ----
Variable mean_all(const Variable& a);
Variable sum_all(const Variable& a);
/// mean |a - b| over all elements.
Variable l1(const Variable& a, const Variable& b);
/// mean over elements of BCE(sigmoid(logits), target), numerically stable.
Variable bce_with_logits(const Variable& logits, double target);

// ---- neural network ----
/// x (B,In) @ w (Out,In)^T + b (Out) -> (B,Out)
Variable linear(const Variable& x, const Variable& w, const Variable& b);
/// x (B,C,H,W), w (Cout,Cin,k,k), b (Cout); zero padding.
Variable conv2d(const Variable& x, const Variable& w, const Variable& b, int stride, int pad);
Variable maxpool2x2(const Variable& x);
Variable instance_norm(const Variable& x, const Variable& gamma, const Variable& beta,
                       double eps = 1e-5);
Variable upsample_nearest2(const Variable& x);
/// Bilinear resample to (out_h, out_w), pixel centers aligned.
Variable bilinear_resize(const Variable& x, int64_t out_h, int64_t out_w);

// ---- sampling ----
/// Bilinear sampling of x (B,C,H,W) at grid (B,Ho,Wo,2) locations given in
/// normalized [-1,1] coordinates (grid[...,0] = x, grid[...,1] = y).
/// Neighbours outside the image contribute `fill`.
Variable grid_sample(const Variable& x, const Variable& grid, double fill);

// Non-differentiable kernel shared with the value-level geometry API.
void grid_sample_kernel(const Tensor& x, const Tensor& grid, double fill, Tensor& out);

}  // namespace gadan::ops
