#include "core/synth.hpp"

#include <cmath>

#include "core/error.hpp"

namespace gadan::synth {

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

int64_t reflect(int64_t i, int64_t n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

}  // namespace

Tensor gaussian_blur(const Tensor& image, double sigma) {
    if (image.rank() != 4) throw ShapeMismatch("gaussian_blur: need B x C x H x W");
    if (sigma <= 0.0) return image.clone();
    const std::vector<double> k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    const int64_t bc = image.dim(0) * image.dim(1), h = image.dim(2), w = image.dim(3);
    Tensor tmp(image.shape()), out(image.shape());
    for (int64_t p = 0; p < bc; ++p) {
        const double* src = image.data() + p * h * w;
        double* mid = tmp.data() + p * h * w;
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t)
                    acc += k[t + radius] * src[i * w + reflect(j + t, w)];
                mid[i * w + j] = acc;
            }
        double* dst = out.data() + p * h * w;
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t)
                    acc += k[t + radius] * mid[reflect(i + t, h) * w + j];
                dst[i * w + j] = acc;
            }
    }
    return out;
}

Tensor smooth_random_image(Rng& rng, int64_t b, int64_t c, int64_t h, int64_t w, double sigma,
                           double amplitude) {
    Tensor noise = rng.normal_tensor({b, c, h, w});
    Tensor smooth = gaussian_blur(noise, sigma);
    double peak = 0.0;
    for (int64_t i = 0; i < smooth.numel(); ++i) peak = std::max(peak, std::abs(smooth[i]));
    if (peak > 0.0)
        for (int64_t i = 0; i < smooth.numel(); ++i) smooth[i] *= amplitude / peak;
    return smooth;
}

geometry::TransformParams random_bounded_params(Rng& rng, geometry::TransformKind kind,
                                                double scale, int tps_grid) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        geometry::TransformParams p = geometry::identity_params(kind, tps_grid);
        for (int i = 0; i < p.theta.size(); ++i) p.theta[i] += rng.uniform(-scale, scale);
        if (kind == geometry::TransformKind::tps) return p;
        if (std::abs(geometry::theta_determinant(kind, p.theta.data())) > 0.05) return p;
    }
    throw SingularTransform("could not sample a well-conditioned transform");
}

geometry::TransformParams homography_from_corner_offsets(
    const Eigen::Matrix<double, 4, 2>& offsets) {
    const double corners[4][2] = {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}};
    Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
    Eigen::Matrix<double, 8, 1> rhs;
    for (int i = 0; i < 4; ++i) {
        const double x = corners[i][0], y = corners[i][1];
        const double u = x + offsets(i, 0), v = y + offsets(i, 1);
        a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
        a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
        rhs[2 * i] = u;
        rhs[2 * i + 1] = v;
    }
    Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
    if (!lu.isInvertible())
        throw SingularTransform("degenerate corner configuration");
    Eigen::Matrix<double, 8, 1> sol = lu.solve(rhs);
    geometry::TransformParams p{geometry::TransformKind::homography, Eigen::VectorXd(8)};
    p.theta = sol;
    return p;
}

}  // namespace gadan::synth
