#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "core/error.hpp"
#include "core/geometry.hpp"
#include "core/synth.hpp"

using namespace gadan;
using geometry::TransformKind;
using geometry::TransformOperator;
using geometry::TransformParams;

namespace {

// Independent inversion route: LU solve of M X = I, renormalized. The
// implementation under test uses the adjugate, so agreement checks two
// distinct algebraic paths.
Eigen::Matrix3d reference_inverse(const Eigen::Matrix3d& m) {
    Eigen::Matrix3d inv = Eigen::FullPivLU<Eigen::Matrix3d>(m).solve(Eigen::Matrix3d::Identity());
    return inv / inv(2, 2);
}

// Scalar-loop bilinear sampler, written without reference to the library
// kernels: normalized coords -> pixel coords -> corner weights, border fill.
double oracle_sample(const Tensor& img, int64_t b, int64_t c, double gx, double gy,
                     double fill) {
    const int64_t h = img.dim(2), w = img.dim(3);
    const double px = (gx + 1.0) * w / 2.0 - 0.5;
    const double py = (gy + 1.0) * h / 2.0 - 0.5;
    const int64_t x0 = static_cast<int64_t>(std::floor(px));
    const int64_t y0 = static_cast<int64_t>(std::floor(py));
    const double wx = px - x0, wy = py - y0;
    double value = 0.0;
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
            const int64_t xx = x0 + dx, yy = y0 + dy;
            const double weight = (dx ? wx : 1.0 - wx) * (dy ? wy : 1.0 - wy);
            const double v = (xx >= 0 && xx < w && yy >= 0 && yy < h)
                                 ? img[((b * img.dim(1) + c) * h + yy) * w + xx]
                                 : fill;
            value += weight * v;
        }
    return value;
}

double tps_kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

}  // namespace

TEST_CASE("identity_params per kind") {
    TransformParams a = geometry::identity_params(TransformKind::affine);
    CHECK(a.theta.size() == 6);
    CHECK(a.theta[0] == 1.0);
    CHECK(a.theta[4] == 1.0);
    CHECK(a.theta[1] + a.theta[2] + a.theta[3] + a.theta[5] == 0.0);

    TransformParams h = geometry::identity_params(TransformKind::homography);
    CHECK(h.theta.size() == 8);
    Eigen::VectorXd expect(8);
    expect << 1, 0, 0, 0, 1, 0, 0, 0;
    CHECK((h.theta - expect).cwiseAbs().maxCoeff() == 0.0);

    TransformParams t = geometry::identity_params(TransformKind::tps);
    CHECK(t.theta.size() == 32);  // K = 16 by default
    CHECK(t.theta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("build_operator assembles matrices row-major with fixed last entry") {
    TransformOperator id =
        geometry::build_operator(geometry::identity_params(TransformKind::affine));
    CHECK((id.matrix - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() == 0.0);

    TransformParams p{TransformKind::affine, Eigen::VectorXd(6)};
    p.theta << 1, 0, 0.5, 0, 1, 0;
    TransformOperator op = geometry::build_operator(p);
    CHECK(op.matrix(0, 2) == 0.5);
    CHECK(op.matrix(2, 2) == 1.0);
    CHECK(op.matrix(2, 0) == 0.0);

    TransformParams bad{TransformKind::homography, Eigen::VectorXd::Zero(5)};
    CHECK_THROWS_AS(geometry::build_operator(bad), ShapeMismatch);

    // singular affine (zero scale)
    TransformParams sing{TransformKind::affine, Eigen::VectorXd::Zero(6)};
    CHECK_THROWS_AS(geometry::build_operator(sing), SingularTransform);
}

TEST_CASE("tps coefficients reproduce displaced control points exactly") {
    // Uniform 0.1 x-shift on every control point.
    TransformParams p = geometry::identity_params(TransformKind::tps);
    for (int i = 0; i < 16; ++i) p.theta[2 * i] = 0.1;
    TransformOperator op = geometry::build_operator(p);
    const auto& ctrl = op.basis->control_points();

    // Direct per-point oracle evaluation of the interpolation map.
    for (int k = 0; k < 16; ++k) {
        const double x = ctrl(k, 0), y = ctrl(k, 1);
        for (int d = 0; d < 2; ++d) {
            double v = op.coeffs(16, d) + op.coeffs(17, d) * x + op.coeffs(18, d) * y;
            for (int c = 0; c < 16; ++c) {
                const double dx = x - ctrl(c, 0), dy = y - ctrl(c, 1);
                v += op.coeffs(c, d) * tps_kernel(dx * dx + dy * dy);
            }
            const double expect = d == 0 ? x + 0.1 : y;
            CHECK(v == doctest::Approx(expect).epsilon(1e-10));
        }
    }
}

TEST_CASE("invert_operator") {
    SUBCASE("identity inverts to identity") {
        TransformOperator id =
            geometry::build_operator(geometry::identity_params(TransformKind::homography));
        CHECK((geometry::invert_operator(id).matrix - Eigen::Matrix3d::Identity())
                  .cwiseAbs()
                  .maxCoeff() < 1e-15);
    }
    SUBCASE("translation by +0.5 inverts to -0.5") {
        TransformParams p{TransformKind::affine, Eigen::VectorXd(6)};
        p.theta << 1, 0, 0.5, 0, 1, 0;
        TransformOperator inv = geometry::invert_operator(geometry::build_operator(p));
        CHECK(inv.matrix(0, 2) == doctest::Approx(-0.5).epsilon(1e-14));
        CHECK(inv.rep[2] == doctest::Approx(-0.5).epsilon(1e-14));
    }
    SUBCASE("random homographies agree with the LU-solve oracle") {
        Rng rng(99);
        double worst = 0.0;
        for (int trial = 0; trial < 200; ++trial) {
            TransformOperator op = geometry::build_operator(
                synth::random_bounded_params(rng, TransformKind::homography, 0.3));
            TransformOperator inv = geometry::invert_operator(op);
            worst = std::max(worst, (inv.matrix - reference_inverse(op.matrix))
                                        .cwiseAbs()
                                        .maxCoeff());
            Eigen::Matrix3d prod = op.matrix * inv.matrix;
            prod /= prod(2, 2);
            worst = std::max(worst,
                             (prod - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff());
        }
        CHECK(worst < 1e-9);
    }
    SUBCASE("tps inverse negates the displacements") {
        Rng rng(7);
        TransformParams p = synth::random_bounded_params(rng, TransformKind::tps, 0.1);
        TransformOperator inv = geometry::invert_operator(geometry::build_operator(p));
        CHECK((inv.rep + p.theta).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("singular matrix raises") {
        TransformParams p{TransformKind::homography, Eigen::VectorXd(8)};
        p.theta << 1, 0, 0, 2, 0, 0, 0, 0;  // rows 1 and 2 proportional
        CHECK_THROWS_AS(geometry::build_operator(p), SingularTransform);
    }
}

TEST_CASE("generate_grid") {
    SUBCASE("identity yields the canonical mesh exactly") {
        TransformOperator id =
            geometry::build_operator(geometry::identity_params(TransformKind::affine));
        Tensor grid = geometry::generate_grid(id, 8, 8);
        double worst = 0.0;
        for (int64_t i = 0; i < 8; ++i)
            for (int64_t j = 0; j < 8; ++j) {
                worst = std::max(worst, std::abs(grid[(i * 8 + j) * 2] -
                                                 ((2.0 * j + 1.0) / 8 - 1.0)));
                worst = std::max(worst, std::abs(grid[(i * 8 + j) * 2 + 1] -
                                                 ((2.0 * i + 1.0) / 8 - 1.0)));
            }
        CHECK(worst == 0.0);
    }
    SUBCASE("pure translation shifts the grid backward") {
        TransformParams p{TransformKind::affine, Eigen::VectorXd(6)};
        p.theta << 1, 0, 0.25, 0, 1, 0;
        Tensor grid = geometry::generate_grid(geometry::build_operator(p), 8, 8);
        for (int64_t i = 0; i < 8; ++i)
            for (int64_t j = 0; j < 8; ++j) {
                CHECK(grid[(i * 8 + j) * 2] ==
                      doctest::Approx((2.0 * j + 1.0) / 8 - 1.0 - 0.25).epsilon(1e-12));
                CHECK(grid[(i * 8 + j) * 2 + 1] ==
                      doctest::Approx((2.0 * i + 1.0) / 8 - 1.0).epsilon(1e-12));
            }
    }
    SUBCASE("perspective grid matches the per-pixel projective oracle") {
        TransformParams p{TransformKind::homography, Eigen::VectorXd(8)};
        p.theta << 1, 0, 0, 0, 1, 0, 0.2, 0;  // (3,1) = 0.2
        TransformOperator op = geometry::build_operator(p);
        Tensor grid = geometry::generate_grid(op, 16, 16);
        const Eigen::Matrix3d hinv = reference_inverse(op.matrix);
        double worst = 0.0;
        for (int64_t i = 0; i < 16; ++i)
            for (int64_t j = 0; j < 16; ++j) {
                const double x = (2.0 * j + 1.0) / 16 - 1.0;
                const double y = (2.0 * i + 1.0) / 16 - 1.0;
                const double u = hinv(0, 0) * x + hinv(0, 1) * y + hinv(0, 2);
                const double v = hinv(1, 0) * x + hinv(1, 1) * y + hinv(1, 2);
                const double w = hinv(2, 0) * x + hinv(2, 1) * y + hinv(2, 2);
                worst = std::max(worst, std::abs(grid[(i * 16 + j) * 2] - u / w));
                worst = std::max(worst, std::abs(grid[(i * 16 + j) * 2 + 1] - v / w));
            }
        CHECK(worst < 1e-6);
    }
    SUBCASE("size validation") {
        TransformOperator id =
            geometry::build_operator(geometry::identity_params(TransformKind::affine));
        CHECK_THROWS_AS(geometry::generate_grid(id, 1, 8), ShapeMismatch);
    }
}

TEST_CASE("warp") {
    Rng rng(13);
    SUBCASE("identity reproduces the input exactly with an all-ones mask") {
        Tensor x = synth::smooth_random_image(rng, 2, 3, 16, 16, 1.0, 0.9);
        geometry::WarpResult w = geometry::warp(
            x, geometry::build_operator(geometry::identity_params(TransformKind::tps)));
        for (int64_t i = 0; i < x.numel(); ++i) CHECK(w.image[i] == x[i]);
        for (int64_t i = 0; i < w.mask.numel(); ++i) CHECK(w.mask[i] == 1.0);
    }
    SUBCASE("one-pixel translation matches the brute-force oracle exactly") {
        Tensor x = synth::smooth_random_image(rng, 1, 1, 4, 4, 0.5, 0.9);
        TransformParams p{TransformKind::affine, Eigen::VectorXd(6)};
        p.theta << 1, 0, 2.0 / 4.0, 0, 1, 0;  // one pixel right in normalized units
        geometry::WarpResult w = geometry::warp(x, geometry::build_operator(p));
        // columns shift: output[j] = input[j-1]; first column filled
        for (int64_t i = 0; i < 4; ++i) {
            CHECK(w.image[i * 4 + 0] == -1.0);
            CHECK(w.mask[i * 4 + 0] == 0.0);
            for (int64_t j = 1; j < 4; ++j) {
                CHECK(w.image[i * 4 + j] == x[i * 4 + j - 1]);
                CHECK(w.mask[i * 4 + j] == 1.0);
            }
        }
    }
    SUBCASE("random warps agree with the scalar bilinear oracle") {
        for (TransformKind kind :
             {TransformKind::affine, TransformKind::homography, TransformKind::tps}) {
            Tensor x = synth::smooth_random_image(rng, 1, 2, 12, 12, 1.0, 0.9);
            TransformOperator op =
                geometry::build_operator(synth::random_bounded_params(rng, kind, 0.2));
            Tensor grid = geometry::generate_grid(op, 12, 12);
            geometry::WarpResult w = geometry::warp(x, op);
            double worst = 0.0;
            for (int64_t c = 0; c < 2; ++c)
                for (int64_t i = 0; i < 12; ++i)
                    for (int64_t j = 0; j < 12; ++j) {
                        const double gx = grid[(i * 12 + j) * 2];
                        const double gy = grid[(i * 12 + j) * 2 + 1];
                        worst = std::max(
                            worst, std::abs(w.image[(c * 12 + i) * 12 + j] -
                                            oracle_sample(x, 0, c, gx, gy, -1.0)));
                    }
            CHECK(worst < 1e-12);
        }
    }
    SUBCASE("mask equals warped all-ones exactly") {
        Tensor x = synth::smooth_random_image(rng, 1, 3, 16, 16, 1.0, 0.9);
        TransformOperator op = geometry::build_operator(
            synth::random_bounded_params(rng, TransformKind::homography, 0.25));
        geometry::WarpResult w = geometry::warp(x, op);
        Tensor ones = Tensor::ones({1, 1, 16, 16});
        Tensor mask2 = geometry::warp_mask(ones, op);
        for (int64_t i = 0; i < mask2.numel(); ++i) CHECK(w.mask[i] == mask2[i]);
    }
    SUBCASE("values stay within [min(fill, min x), max(fill, max x)]") {
        Tensor x = synth::smooth_random_image(rng, 1, 1, 16, 16, 0.7, 0.95);
        double lo = -1.0, hi = -1.0;
        for (int64_t i = 0; i < x.numel(); ++i) {
            lo = std::min(lo, x[i]);
            hi = std::max(hi, x[i]);
        }
        for (int trial = 0; trial < 10; ++trial) {
            TransformOperator op = geometry::build_operator(
                synth::random_bounded_params(rng, TransformKind::tps, 0.25));
            geometry::WarpResult w = geometry::warp(x, op);
            for (int64_t i = 0; i < w.image.numel(); ++i) {
                CHECK(w.image[i] >= lo - 1e-12);
                CHECK(w.image[i] <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("warp_mask") {
    SUBCASE("all ones under identity stays all ones") {
        Tensor ones = Tensor::ones({1, 1, 8, 8});
        Tensor out = geometry::warp_mask(
            ones, geometry::build_operator(geometry::identity_params(TransformKind::affine)));
        for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 1.0);
    }
    SUBCASE("half-frame translation zeroes about half the mask") {
        Tensor ones = Tensor::ones({1, 1, 32, 32});
        TransformParams p{TransformKind::affine, Eigen::VectorXd(6)};
        p.theta << 1, 0, 1.0, 0, 1, 0;  // shift by half the frame
        Tensor out = geometry::warp_mask(ones, geometry::build_operator(p));
        double sum = 0.0;
        for (int64_t i = 0; i < out.numel(); ++i) sum += out[i];
        CHECK(sum / out.numel() == doctest::Approx(0.5).epsilon(0.05));
    }
}

TEST_CASE("round trips") {
    Rng rng(31);
    SUBCASE("double inversion returns the original within 1e-9") {
        for (int trial = 0; trial < 100; ++trial) {
            for (TransformKind kind : {TransformKind::affine, TransformKind::homography}) {
                TransformOperator op =
                    geometry::build_operator(synth::random_bounded_params(rng, kind, 0.3));
                TransformOperator back =
                    geometry::invert_operator(geometry::invert_operator(op));
                CHECK((back.matrix - op.matrix).cwiseAbs().maxCoeff() < 1e-9);
            }
        }
    }
    SUBCASE("warp then inverse warp recovers smooth images (interior L1 <= 0.05)") {
        for (int trial = 0; trial < 10; ++trial) {
            Eigen::Matrix<double, 4, 2> offsets;
            for (int i = 0; i < 8; ++i) offsets(i / 2, i % 2) = rng.uniform(-0.5, 0.5);
            TransformOperator h =
                geometry::build_operator(synth::homography_from_corner_offsets(offsets));
            Tensor x = synth::smooth_random_image(rng, 1, 1, 32, 32, 1.5, 0.9);
            geometry::WarpResult fwd = geometry::warp(x, h);
            TransformOperator hinv = geometry::invert_operator(h);
            geometry::WarpResult back = geometry::warp(fwd.image, hinv);
            Tensor back_mask = geometry::warp_mask(fwd.mask, hinv);
            double sum = 0.0;
            int64_t n = 0;
            for (int64_t i = 0; i < x.numel(); ++i) {
                if (back.mask[i] <= 0.99 || back_mask[i] <= 0.99) continue;
                sum += std::abs(x[i] - back.image[i]);
                ++n;
            }
            REQUIRE(n > 0);
            CHECK(sum / n <= 0.05);
        }
    }
    SUBCASE("tps approximate inverse round trip (displacements <= 10% width)") {
        for (int trial = 0; trial < 5; ++trial) {
            TransformParams p = synth::random_bounded_params(rng, TransformKind::tps, 0.1);
            TransformOperator op = geometry::build_operator(p);
            Tensor x = synth::smooth_random_image(rng, 1, 1, 32, 32, 1.5, 0.9);
            geometry::WarpResult fwd = geometry::warp(x, op);
            TransformOperator inv = geometry::invert_operator(op);
            geometry::WarpResult back = geometry::warp(fwd.image, inv);
            Tensor back_mask = geometry::warp_mask(fwd.mask, inv);
            double sum = 0.0;
            int64_t n = 0;
            for (int64_t i = 0; i < x.numel(); ++i) {
                if (back.mask[i] <= 0.99 || back_mask[i] <= 0.99) continue;
                sum += std::abs(x[i] - back.image[i]);
                ++n;
            }
            REQUIRE(n > 0);
            CHECK(sum / n <= 0.08);
        }
    }
}
