#pragma once

#include "core/geometry.hpp"
#include "core/rng.hpp"

namespace gadan::synth {

/// Separable Gaussian blur (reflect border), kernel radius ceil(3*sigma).
Tensor gaussian_blur(const Tensor& image, double sigma);

/// Band-limited random image in roughly [-amplitude, amplitude]:
/// white noise blurred with the given sigma and rescaled.
Tensor smooth_random_image(Rng& rng, int64_t b, int64_t c, int64_t h, int64_t w, double sigma,
                           double amplitude);

/// Random parameters with deviations bounded by `scale` around the identity;
/// resampled until the assembled matrix is comfortably invertible.
geometry::TransformParams random_bounded_params(Rng& rng, geometry::TransformKind kind,
                                                double scale,
                                                int tps_grid = geometry::kDefaultTpsGrid);

/// Homography mapping the unit corners (+-1, +-1) to corners displaced by
/// `offsets` (4 x 2, normalized units), via the 8x8 direct linear solve.
geometry::TransformParams homography_from_corner_offsets(const Eigen::Matrix<double, 4, 2>& offsets);

}  // namespace gadan::synth
