#pragma once

#include <optional>
#include <string>

#include "core/rng.hpp"
#include "core/tensor.hpp"

// Synthetic rectangle domains for the end-to-end run, plus the measurement
// oracles used to judge it. The oracles are independent of the library's
// geometry code: tilt comes from corner fitting (threshold, largest
// component, convex hull, minimum-area rectangle), sharpness from the
// 4-neighbour Laplacian.
namespace toy {

struct Scene {
    double cx, cy;          // rectangle centre, pixels
    double half_w, half_h;  // half extents, pixels (width > height)
    double fg, bg;          // intensities in [-1, 1]
};

Scene random_scene(gadan::Rng& rng, int size);

/// Axis-aligned bright rectangle on dark ground. 1 x 1 x size x size.
gadan::Tensor render_axis_aligned(const Scene& scene, int size);

/// The same scene rotated by tilt_deg (about the image centre) and blurred
/// with the given sigma.
gadan::Tensor render_tilted(const Scene& scene, int size, double tilt_deg, double blur_sigma);

/// Write nx axis-aligned scenes into x_dir and ny tilted ones (tilt uniform
/// in +-tilt_range_deg, blur sigma) into y_dir as PNG files.
void write_domains(const std::string& x_dir, const std::string& y_dir, int nx, int ny, int size,
                   double tilt_range_deg, double blur_sigma, uint64_t seed);

/// Corner-fitting tilt estimate in degrees (angle of the long side of the
/// minimum-area rectangle around the largest bright component), or nullopt
/// when no usable component exists. Accepts 1 x 1 x H x W or 1 x H x W.
std::optional<double> estimate_tilt_deg(const gadan::Tensor& image);

/// Mean squared 4-neighbour Laplacian (sharpness proxy).
double laplacian_energy(const gadan::Tensor& image);

}  // namespace toy
