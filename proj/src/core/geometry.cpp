#include "core/geometry.hpp"

#include <cmath>
#include <cstring>

#include "core/error.hpp"

namespace gadan::geometry {

namespace {

constexpr double kProjEps = 1e-12;

double radial_kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

void check_theta(TransformKind kind, int64_t n, int tps_grid) {
    if (n != param_count(kind, tps_grid))
        throw ShapeMismatch(std::string("theta length ") + std::to_string(n) + " for kind " +
                            kind_name(kind));
}

Eigen::Matrix3d matrix_from_theta(TransformKind kind, const double* t) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    if (kind == TransformKind::affine) {
        m << t[0], t[1], t[2], t[3], t[4], t[5], 0.0, 0.0, 1.0;
    } else {
        m << t[0], t[1], t[2], t[3], t[4], t[5], t[6], t[7], 1.0;
    }
    return m;
}

Eigen::Matrix3d adjugate(const Eigen::Matrix3d& m) {
    Eigen::Matrix3d a;
    a(0, 0) = m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
    a(0, 1) = m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2);
    a(0, 2) = m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1);
    a(1, 0) = m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2);
    a(1, 1) = m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0);
    a(1, 2) = m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2);
    a(2, 0) = m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0);
    a(2, 1) = m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1);
    a(2, 2) = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    return a;
}

/// Grid of source coordinates for the map `m` applied to output pixel
/// centers, with projective division. Writes H*W*2 doubles.
void matrix_grid_kernel(const Eigen::Matrix3d& m, int64_t height, int64_t width, double* out) {
    for (int64_t i = 0; i < height; ++i) {
        const double y = (2.0 * i + 1.0) / height - 1.0;
        for (int64_t j = 0; j < width; ++j) {
            const double x = (2.0 * j + 1.0) / width - 1.0;
            const double u = m(0, 0) * x + m(0, 1) * y + m(0, 2);
            const double v = m(1, 0) * x + m(1, 1) * y + m(1, 2);
            double w = m(2, 0) * x + m(2, 1) * y + m(2, 2);
            if (std::abs(w) < kProjEps) w = std::copysign(kProjEps, w == 0.0 ? 1.0 : w);
            out[(i * width + j) * 2] = u / w;
            out[(i * width + j) * 2 + 1] = v / w;
        }
    }
}

Eigen::VectorXd free_entries(TransformKind kind, const Eigen::Matrix3d& m) {
    const int n = kind == TransformKind::affine ? 6 : 8;
    Eigen::VectorXd rep(n);
    for (int i = 0; i < n; ++i) rep[i] = m(i / 3, i % 3);
    return rep;
}

}  // namespace

const char* kind_name(TransformKind kind) {
    switch (kind) {
        case TransformKind::affine: return "affine";
        case TransformKind::homography: return "homography";
        case TransformKind::tps: return "tps";
    }
    return "?";
}

TransformKind kind_from_name(const std::string& name) {
    if (name == "affine") return TransformKind::affine;
    if (name == "homography") return TransformKind::homography;
    if (name == "tps") return TransformKind::tps;
    throw ConfigError("unknown transform_kind '" + name +
                      "' (valid: affine, homography, tps)");
}

int param_count(TransformKind kind, int tps_grid) {
    switch (kind) {
        case TransformKind::affine: return 6;
        case TransformKind::homography: return 8;
        case TransformKind::tps: return 2 * tps_grid * tps_grid;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// TpsBasis
// ---------------------------------------------------------------------------

TpsBasis::TpsBasis(int grid_n) : grid_n_(grid_n), k_(grid_n * grid_n) {
    if (grid_n < 2) throw ConfigError("tps_grid must be >= 2");
    ctrl_.resize(k_, 2);
    for (int i = 0; i < grid_n; ++i)
        for (int j = 0; j < grid_n; ++j) {
            ctrl_(i * grid_n + j, 0) = -0.9 + 1.8 * j / (grid_n - 1);
            ctrl_(i * grid_n + j, 1) = -0.9 + 1.8 * i / (grid_n - 1);
        }

    // Kernel system L [w; a] = [target; 0].
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(k_ + 3, k_ + 3);
    for (int i = 0; i < k_; ++i) {
        for (int j = 0; j < k_; ++j)
            l(i, j) = radial_kernel((ctrl_.row(i) - ctrl_.row(j)).squaredNorm());
        l(i, k_) = 1.0;
        l(i, k_ + 1) = ctrl_(i, 0);
        l(i, k_ + 2) = ctrl_(i, 1);
        l(k_, i) = 1.0;
        l(k_ + 1, i) = ctrl_(i, 0);
        l(k_ + 2, i) = ctrl_(i, 1);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(l);
    if (!lu.isInvertible())
        throw SingularTransform("tps kernel system is rank-deficient");

    // Zero displacements solve to the identity map exactly: zero weights and
    // the identity affine part.
    base_ = Eigen::MatrixXd::Zero(k_ + 3, 2);
    base_(k_ + 1, 0) = 1.0;
    base_(k_ + 2, 1) = 1.0;

    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(k_ + 3, k_);
    rhs.topLeftCorner(k_, k_).setIdentity();
    m_disp_ = lu.solve(rhs);
}

std::shared_ptr<const TpsBasis> TpsBasis::get(int grid_n) {
    static std::mutex mutex;
    static std::map<int, std::shared_ptr<const TpsBasis>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(grid_n);
    if (it != cache.end()) return it->second;
    auto basis = std::shared_ptr<const TpsBasis>(new TpsBasis(grid_n));
    cache[grid_n] = basis;
    return basis;
}

std::shared_ptr<const Eigen::MatrixXd> TpsBasis::eval_matrix(int64_t height, int64_t width) const {
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        auto it = cache_.find({height, width});
        if (it != cache_.end()) return it->second;
    }
    auto e = std::make_shared<Eigen::MatrixXd>(height * width, k_ + 3);
    for (int64_t i = 0; i < height; ++i) {
        const double y = (2.0 * i + 1.0) / height - 1.0;
        for (int64_t j = 0; j < width; ++j) {
            const double x = (2.0 * j + 1.0) / width - 1.0;
            const int64_t row = i * width + j;
            for (int c = 0; c < k_; ++c) {
                const double dx = x - ctrl_(c, 0), dy = y - ctrl_(c, 1);
                (*e)(row, c) = radial_kernel(dx * dx + dy * dy);
            }
            (*e)(row, k_) = 1.0;
            (*e)(row, k_ + 1) = x;
            (*e)(row, k_ + 2) = y;
        }
    }
    std::lock_guard<std::mutex> lock(cache_mutex_);
    cache_[{height, width}] = e;
    return e;
}

Eigen::Vector2d TpsBasis::evaluate(const Eigen::MatrixXd& coeffs, double x, double y) const {
    Eigen::Vector2d out = Eigen::Vector2d::Zero();
    for (int d = 0; d < 2; ++d) {
        double v = coeffs(k_, d) + coeffs(k_ + 1, d) * x + coeffs(k_ + 2, d) * y;
        for (int c = 0; c < k_; ++c) {
            const double dx = x - ctrl_(c, 0), dy = y - ctrl_(c, 1);
            v += coeffs(c, d) * radial_kernel(dx * dx + dy * dy);
        }
        out[d] = v;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Value-level API
// ---------------------------------------------------------------------------

TransformParams identity_params(TransformKind kind, int tps_grid) {
    TransformParams p{kind, Eigen::VectorXd::Zero(param_count(kind, tps_grid))};
    if (kind == TransformKind::affine) {
        p.theta << 1, 0, 0, 0, 1, 0;
    } else if (kind == TransformKind::homography) {
        p.theta << 1, 0, 0, 0, 1, 0, 0, 0;
    }
    return p;
}

Eigen::Matrix3d normalized_inverse(const Eigen::Matrix3d& m) {
    const double det = m.determinant();
    if (std::abs(det) <= kDetEps)
        throw SingularTransform("matrix determinant " + std::to_string(det));
    Eigen::Matrix3d adj = adjugate(m);
    if (std::abs(adj(2, 2)) <= kDetEps)
        throw SingularTransform("inverse cannot be normalized ((3,3) entry vanishes)");
    return adj / adj(2, 2);
}

TransformOperator build_operator(const TransformParams& params) {
    TransformOperator op;
    op.kind = params.kind;
    if (!params.theta.allFinite()) throw ShapeMismatch("theta has non-finite entries");
    if (params.kind == TransformKind::tps) {
        const int k2 = static_cast<int>(params.theta.size());
        const int grid_n = static_cast<int>(std::lround(std::sqrt(k2 / 2.0)));
        if (2 * grid_n * grid_n != k2)
            throw ShapeMismatch("tps theta length must be 2*n^2");
        op.basis = TpsBasis::get(grid_n);
        const int k = op.basis->num_points();
        Eigen::MatrixXd disp(k, 2);
        for (int i = 0; i < k; ++i) {
            disp(i, 0) = params.theta[2 * i];
            disp(i, 1) = params.theta[2 * i + 1];
        }
        op.coeffs = op.basis->identity_coeffs() + op.basis->displacement_map() * disp;
        op.rep = params.theta;
        return op;
    }
    check_theta(params.kind, params.theta.size(), 0);
    op.matrix = matrix_from_theta(params.kind, params.theta.data());
    if (std::abs(op.matrix.determinant()) <= kDetEps)
        throw SingularTransform("assembled matrix is singular");
    op.rep = params.theta;
    return op;
}

TransformOperator invert_operator(const TransformOperator& op) {
    TransformOperator inv;
    inv.kind = op.kind;
    if (op.kind == TransformKind::tps) {
        // First-order approximate inverse: negate the control displacements.
        TransformParams p{TransformKind::tps, -op.rep};
        return build_operator(p);
    }
    inv.matrix = normalized_inverse(op.matrix);
    if (op.kind == TransformKind::affine) {
        // Inverse of an affine map is affine; clear roundoff in the last row.
        inv.matrix(2, 0) = 0.0;
        inv.matrix(2, 1) = 0.0;
        inv.matrix(2, 2) = 1.0;
    }
    inv.rep = free_entries(op.kind, inv.matrix);
    return inv;
}

Tensor generate_grid(const TransformOperator& op, int64_t height, int64_t width) {
    if (height < 2 || width < 2) throw ShapeMismatch("grid size must be >= 2");
    Tensor grid({1, height, width, 2});
    if (op.kind == TransformKind::tps) {
        auto e = op.basis->eval_matrix(height, width);
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>> g(
            grid.data(), height * width, 2);
        g.noalias() = (*e) * op.coeffs;
        return grid;
    }
    matrix_grid_kernel(normalized_inverse(op.matrix), height, width, grid.data());
    return grid;
}

WarpResult warp(const Tensor& image, const TransformOperator& op, double fill) {
    if (image.rank() != 4) throw ShapeMismatch("warp: image must be B x C x H x W");
    const int64_t b = image.dim(0), h = image.dim(2), w = image.dim(3);
    Tensor grid1 = generate_grid(op, h, w);
    Tensor grid({b, h, w, 2});
    for (int64_t i = 0; i < b; ++i)
        std::memcpy(grid.data() + i * h * w * 2, grid1.data(), sizeof(double) * h * w * 2);
    WarpResult out;
    out.image = Tensor({b, image.dim(1), h, w});
    ops::grid_sample_kernel(image, grid, fill, out.image);
    Tensor ones = Tensor::ones({b, 1, h, w});
    out.mask = Tensor({b, 1, h, w});
    ops::grid_sample_kernel(ones, grid, 0.0, out.mask);
    return out;
}

Tensor warp_mask(const Tensor& mask, const TransformOperator& op) {
    if (mask.rank() != 4 || mask.dim(1) != 1)
        throw ShapeMismatch("warp_mask: mask must be B x 1 x H x W");
    const int64_t b = mask.dim(0), h = mask.dim(2), w = mask.dim(3);
    Tensor grid1 = generate_grid(op, h, w);
    Tensor grid({b, h, w, 2});
    for (int64_t i = 0; i < b; ++i)
        std::memcpy(grid.data() + i * h * w * 2, grid1.data(), sizeof(double) * h * w * 2);
    Tensor out({b, 1, h, w});
    ops::grid_sample_kernel(mask, grid, 0.0, out);
    return out;
}

// ---------------------------------------------------------------------------
// Differentiable batched layer
// ---------------------------------------------------------------------------

double theta_determinant(TransformKind kind, const double* theta) {
    if (kind == TransformKind::tps) return 1.0;
    return matrix_from_theta(kind, theta).determinant();
}

Variable assemble_matrix(TransformKind kind, const Variable& theta) {
    if (kind == TransformKind::tps) throw KindMismatch("assemble_matrix: tps has no matrix");
    const int n = param_count(kind);
    const auto& ts = theta.value().shape();
    if (ts.size() != 2 || ts[1] != n)
        throw ShapeMismatch("assemble_matrix: theta " + theta.value().shape_str());
    const int64_t b = ts[0];
    Tensor out({b, 9});
    for (int64_t i = 0; i < b; ++i) {
        const double* t = theta.value().data() + i * n;
        double* m = out.data() + i * 9;
        for (int j = 0; j < n; ++j) m[j] = t[j];
        for (int j = n; j < 8; ++j) m[j] = 0.0;
        m[8] = 1.0;
    }
    return Variable::make(std::move(out), "assemble_matrix", {theta}, [theta, b, n](Node& node) {
        Tensor g({b, static_cast<int64_t>(n)});
        for (int64_t i = 0; i < b; ++i)
            for (int j = 0; j < n; ++j) g[i * n + j] = node.grad[i * 9 + j];
        theta.node()->accumulate(g);
    });
}

Variable invert33_normalized(const Variable& mat) {
    const auto& ms = mat.value().shape();
    if (ms.size() != 2 || ms[1] != 9)
        throw ShapeMismatch("invert33: expected B x 9, got " + mat.value().shape_str());
    const int64_t b = ms[0];
    Tensor out({b, 9});
    Tensor saved_inv({b, 9});  // true (unnormalized) inverse, kept for backward
    for (int64_t i = 0; i < b; ++i) {
        Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> m(mat.value().data() +
                                                                         i * 9);
        const double det = m.determinant();
        if (std::abs(det) <= kDetEps)
            throw SingularTransform("batch item " + std::to_string(i) + ": determinant " +
                                    std::to_string(det));
        Eigen::Matrix3d adj = adjugate(m);
        if (std::abs(adj(2, 2)) <= kDetEps)
            throw SingularTransform("batch item " + std::to_string(i) +
                                    ": inverse cannot be normalized");
        Eigen::Matrix3d a = adj / det;
        Eigen::Matrix3d norm = a / a(2, 2);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                out[i * 9 + r * 3 + c] = norm(r, c);
                saved_inv[i * 9 + r * 3 + c] = a(r, c);
            }
    }
    return Variable::make(std::move(out), "invert33", {mat}, [mat, saved_inv, b](Node& node) {
        Tensor g({b, 9});
        for (int64_t i = 0; i < b; ++i) {
            Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> a(saved_inv.data() +
                                                                             i * 9);
            Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> gb(node.grad.data() +
                                                                              i * 9);
            const double s = a(2, 2);
            Eigen::Matrix3d bmat = a.eval() / s;
            // d/dA of B = A / A(2,2):
            Eigen::Matrix3d ga = gb / s;
            ga(2, 2) -= (gb.array() * bmat.array()).sum() / s;
            // d/dM of A = M^-1:  gM = -A^T gA A^T
            Eigen::Matrix3d gm = -(a.transpose() * ga * a.transpose());
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) g[i * 9 + r * 3 + c] = gm(r, c);
        }
        mat.node()->accumulate(g);
    });
}

Variable projective_grid(const Variable& mat, int64_t height, int64_t width) {
    const auto& ms = mat.value().shape();
    if (ms.size() != 2 || ms[1] != 9)
        throw ShapeMismatch("projective_grid: expected B x 9");
    if (height < 2 || width < 2) throw ShapeMismatch("grid size must be >= 2");
    const int64_t b = ms[0];
    Tensor out({b, height, width, 2});
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < b; ++i) {
        Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> m(mat.value().data() +
                                                                         i * 9);
        matrix_grid_kernel(m, height, width, out.data() + i * height * width * 2);
    }
    return Variable::make(
        std::move(out), "projective_grid", {mat}, [mat, b, height, width](Node& node) {
            Tensor g = Tensor::zeros({b, 9});
#pragma omp parallel for schedule(static)
            for (int64_t bi = 0; bi < b; ++bi) {
                const double* m = mat.value().data() + bi * 9;
                const double* gr = node.grad.data() + bi * height * width * 2;
                double* gm = g.data() + bi * 9;
                for (int64_t i = 0; i < height; ++i) {
                    const double y = (2.0 * i + 1.0) / height - 1.0;
                    for (int64_t j = 0; j < width; ++j) {
                        const double x = (2.0 * j + 1.0) / width - 1.0;
                        const double u = m[0] * x + m[1] * y + m[2];
                        const double v = m[3] * x + m[4] * y + m[5];
                        double w = m[6] * x + m[7] * y + m[8];
                        if (std::abs(w) < kProjEps)
                            w = std::copysign(kProjEps, w == 0.0 ? 1.0 : w);
                        const double ggx = gr[(i * width + j) * 2];
                        const double ggy = gr[(i * width + j) * 2 + 1];
                        const double gu = ggx / w;
                        const double gv = ggy / w;
                        const double gw = -(ggx * u + ggy * v) / (w * w);
                        gm[0] += gu * x;
                        gm[1] += gu * y;
                        gm[2] += gu;
                        gm[3] += gv * x;
                        gm[4] += gv * y;
                        gm[5] += gv;
                        gm[6] += gw * x;
                        gm[7] += gw * y;
                        gm[8] += gw;
                    }
                }
            }
            mat.node()->accumulate(g);
        });
}

Variable tps_coefficients(const Variable& theta, const std::shared_ptr<const TpsBasis>& basis) {
    const int k = basis->num_points();
    const auto& ts = theta.value().shape();
    if (ts.size() != 2 || ts[1] != 2 * k)
        throw ShapeMismatch("tps_coefficients: theta " + theta.value().shape_str());
    const int64_t b = ts[0];
    const int64_t rows = k + 3;
    Tensor out({b, rows * 2});
    const Eigen::MatrixXd& md = basis->displacement_map();
    const Eigen::MatrixXd& base = basis->identity_coeffs();
    for (int64_t i = 0; i < b; ++i) {
        Eigen::MatrixXd disp(k, 2);
        for (int c = 0; c < k; ++c) {
            disp(c, 0) = theta.value()[i * 2 * k + 2 * c];
            disp(c, 1) = theta.value()[i * 2 * k + 2 * c + 1];
        }
        Eigen::MatrixXd coeffs = base + md * disp;
        for (int64_t r = 0; r < rows; ++r) {
            out[i * rows * 2 + r * 2] = coeffs(r, 0);
            out[i * rows * 2 + r * 2 + 1] = coeffs(r, 1);
        }
    }
    return Variable::make(std::move(out), "tps_coefficients", {theta},
                          [theta, basis, b, k, rows](Node& node) {
                              const Eigen::MatrixXd& md = basis->displacement_map();
                              Tensor g({b, static_cast<int64_t>(2 * k)});
                              for (int64_t i = 0; i < b; ++i) {
                                  Eigen::MatrixXd gc(rows, 2);
                                  for (int64_t r = 0; r < rows; ++r) {
                                      gc(r, 0) = node.grad[i * rows * 2 + r * 2];
                                      gc(r, 1) = node.grad[i * rows * 2 + r * 2 + 1];
                                  }
                                  Eigen::MatrixXd gd = md.transpose() * gc;  // K x 2
                                  for (int c = 0; c < k; ++c) {
                                      g[i * 2 * k + 2 * c] = gd(c, 0);
                                      g[i * 2 * k + 2 * c + 1] = gd(c, 1);
                                  }
                              }
                              theta.node()->accumulate(g);
                          });
}

Variable tps_grid(const Variable& coeffs, const std::shared_ptr<const TpsBasis>& basis,
                  int64_t height, int64_t width) {
    const int64_t rows = basis->num_points() + 3;
    const auto& cs = coeffs.value().shape();
    if (cs.size() != 2 || cs[1] != rows * 2)
        throw ShapeMismatch("tps_grid: coeffs " + coeffs.value().shape_str());
    if (height < 2 || width < 2) throw ShapeMismatch("grid size must be >= 2");
    const int64_t b = cs[0];
    auto e = basis->eval_matrix(height, width);
    Tensor out({b, height, width, 2});
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < b; ++i) {
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>> c(
            coeffs.value().data() + i * rows * 2, rows, 2);
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>> g(
            out.data() + i * height * width * 2, height * width, 2);
        g.noalias() = (*e) * c;
    }
    return Variable::make(std::move(out), "tps_grid", {coeffs},
                          [coeffs, e, b, rows, height, width](Node& node) {
                              Tensor g({b, rows * 2});
#pragma omp parallel for schedule(static)
                              for (int64_t i = 0; i < b; ++i) {
                                  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 2,
                                                                 Eigen::RowMajor>>
                                      gg(node.grad.data() + i * height * width * 2,
                                         height * width, 2);
                                  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 2,
                                                           Eigen::RowMajor>>
                                      gc(g.data() + i * rows * 2, rows, 2);
                                  gc.noalias() = e->transpose() * gg;
                              }
                              coeffs.node()->accumulate(g);
                          });
}

OperatorBatch build_operator_batch(TransformKind kind, const Variable& theta,
                                   std::shared_ptr<const TpsBasis> basis) {
    OperatorBatch op;
    op.kind = kind;
    op.rep = theta;
    if (!theta.value().all_finite()) throw ShapeMismatch("theta has non-finite entries");
    if (kind == TransformKind::tps) {
        if (!basis) {
            const int64_t n = theta.value().dim(1);
            const int grid_n = static_cast<int>(std::lround(std::sqrt(n / 2.0)));
            basis = TpsBasis::get(grid_n);
        }
        op.basis = std::move(basis);
        op.coeffs = tps_coefficients(theta, op.basis);
    } else {
        op.mat = assemble_matrix(kind, theta);
    }
    return op;
}

OperatorBatch invert_operator_batch(const OperatorBatch& op) {
    OperatorBatch inv;
    inv.kind = op.kind;
    inv.basis = op.basis;
    if (op.kind == TransformKind::tps) {
        inv.rep = ops::scale(op.rep, -1.0);
        inv.coeffs = tps_coefficients(inv.rep, inv.basis);
        return inv;
    }
    inv.mat = invert33_normalized(op.mat);
    inv.rep = ops::slice_dim1(inv.mat, 0, param_count(op.kind));
    return inv;
}

Variable generate_grid_batch(const OperatorBatch& op, int64_t height, int64_t width) {
    if (op.kind == TransformKind::tps) return tps_grid(op.coeffs, op.basis, height, width);
    return projective_grid(invert33_normalized(op.mat), height, width);
}

WarpVars warp_batch(const Variable& image, const OperatorBatch& op, double fill) {
    const auto& is = image.value().shape();
    if (is.size() != 4) throw ShapeMismatch("warp_batch: image must be B x C x H x W");
    if (is[0] != op.batch()) throw ShapeMismatch("warp_batch: batch size mismatch");
    Variable grid = generate_grid_batch(op, is[2], is[3]);
    WarpVars out;
    out.image = ops::grid_sample(image, grid, fill);
    Variable ones = Variable::leaf(Tensor::ones({is[0], 1, is[2], is[3]}));
    out.mask = ops::grid_sample(ones, grid, 0.0);
    return out;
}

Variable warp_mask_batch(const Variable& mask, const OperatorBatch& op) {
    const auto& ms = mask.value().shape();
    if (ms.size() != 4 || ms[1] != 1) throw ShapeMismatch("warp_mask_batch: mask B x 1 x H x W");
    Variable grid = generate_grid_batch(op, ms[2], ms[3]);
    return ops::grid_sample(mask, grid, 0.0);
}

}  // namespace gadan::geometry
