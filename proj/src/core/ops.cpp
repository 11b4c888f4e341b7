#include "core/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "core/error.hpp"

namespace gadan::ops {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

void check_same_shape(const Variable& a, const Variable& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw ShapeMismatch(std::string(op) + ": " + a.value().shape_str() + " vs " +
                            b.value().shape_str());
}

int64_t tail_numel(const std::vector<int64_t>& shape, size_t from) {
    int64_t n = 1;
    for (size_t i = from; i < shape.size(); ++i) n *= shape[i];
    return n;
}

void im2col(const double* x, int64_t C, int64_t H, int64_t W, int64_t k, int64_t stride,
            int64_t pad, int64_t Ho, int64_t Wo, double* col) {
    const int64_t patch = Ho * Wo;
    for (int64_t c = 0; c < C; ++c) {
        const double* xc = x + c * H * W;
        for (int64_t ki = 0; ki < k; ++ki) {
            for (int64_t kj = 0; kj < k; ++kj) {
                double* row = col + ((c * k + ki) * k + kj) * patch;
                const int64_t off = kj - pad;
                int64_t lo = off < 0 ? (-off + stride - 1) / stride : 0;
                int64_t hi = (W - 1 - off) / stride;
                if (hi >= Wo) hi = Wo - 1;
                for (int64_t ho = 0; ho < Ho; ++ho) {
                    const int64_t h = ho * stride - pad + ki;
                    double* dst = row + ho * Wo;
                    if (h < 0 || h >= H) {
                        std::memset(dst, 0, sizeof(double) * Wo);
                        continue;
                    }
                    const double* src = xc + h * W;
                    for (int64_t wo = 0; wo < lo; ++wo) dst[wo] = 0.0;
                    if (stride == 1) {
                        std::memcpy(dst + lo, src + lo + off, sizeof(double) * (hi - lo + 1));
                    } else {
                        for (int64_t wo = lo; wo <= hi; ++wo) dst[wo] = src[wo * stride + off];
                    }
                    for (int64_t wo = hi + 1; wo < Wo; ++wo) dst[wo] = 0.0;
                }
            }
        }
    }
}

// Direct convolution via shifted-row AXPY passes; beats im2col + GEMM when
// the fan-in (C * k * k) is small and for the large kernels, where the
// column buffer traffic dominates the GEMM.
constexpr int64_t kDirectConvFanIn = 100;

void direct_conv_forward(const double* x, const double* w, const double* bias, int64_t C,
                         int64_t H, int64_t W, int64_t Cout, int64_t k, int64_t stride,
                         int64_t pad, int64_t Ho, int64_t Wo, double* out) {
    for (int64_t co = 0; co < Cout; ++co) {
        double* oc = out + co * Ho * Wo;
        for (int64_t i = 0; i < Ho * Wo; ++i) oc[i] = bias[co];
        for (int64_t c = 0; c < C; ++c) {
            const double* xc = x + c * H * W;
            for (int64_t ki = 0; ki < k; ++ki)
                for (int64_t kj = 0; kj < k; ++kj) {
                    const double wv = w[((co * C + c) * k + ki) * k + kj];
                    for (int64_t ho = 0; ho < Ho; ++ho) {
                        const int64_t h = ho * stride - pad + ki;
                        if (h < 0 || h >= H) continue;
                        const double* src = xc + h * W;
                        double* dst = oc + ho * Wo;
                        const int64_t off = kj - pad;
                        // valid wo range: 0 <= wo*stride + off < W
                        int64_t lo = off < 0 ? (-off + stride - 1) / stride : 0;
                        int64_t hi = (W - 1 - off) / stride;
                        if (hi >= Wo) hi = Wo - 1;
                        if (stride == 1) {
                            for (int64_t wo = lo; wo <= hi; ++wo)
                                dst[wo] += wv * src[wo + off];
                        } else {
                            for (int64_t wo = lo; wo <= hi; ++wo)
                                dst[wo] += wv * src[wo * stride + off];
                        }
                    }
                }
        }
    }
}

void direct_conv_backward_input(const double* gout, const double* w, int64_t C, int64_t H,
                                int64_t W, int64_t Cout, int64_t k, int64_t stride, int64_t pad,
                                int64_t Ho, int64_t Wo, double* gx) {
    for (int64_t c = 0; c < C; ++c) {
        double* gc = gx + c * H * W;
        for (int64_t co = 0; co < Cout; ++co) {
            const double* go = gout + co * Ho * Wo;
            for (int64_t ki = 0; ki < k; ++ki)
                for (int64_t kj = 0; kj < k; ++kj) {
                    const double wv = w[((co * C + c) * k + ki) * k + kj];
                    for (int64_t ho = 0; ho < Ho; ++ho) {
                        const int64_t h = ho * stride - pad + ki;
                        if (h < 0 || h >= H) continue;
                        double* dst = gc + h * W;
                        const double* src = go + ho * Wo;
                        const int64_t off = kj - pad;
                        int64_t lo = off < 0 ? (-off + stride - 1) / stride : 0;
                        int64_t hi = (W - 1 - off) / stride;
                        if (hi >= Wo) hi = Wo - 1;
                        if (stride == 1) {
                            for (int64_t wo = lo; wo <= hi; ++wo)
                                dst[wo + off] += wv * src[wo];
                        } else {
                            for (int64_t wo = lo; wo <= hi; ++wo)
                                dst[wo * stride + off] += wv * src[wo];
                        }
                    }
                }
        }
    }
}

void direct_conv_backward_weight(const double* x, const double* gout, int64_t C, int64_t H,
                                 int64_t W, int64_t Cout, int64_t k, int64_t stride, int64_t pad,
                                 int64_t Ho, int64_t Wo, double* gw, double* gb) {
    for (int64_t co = 0; co < Cout; ++co) {
        const double* go = gout + co * Ho * Wo;
        double acc_b = 0.0;
        for (int64_t i = 0; i < Ho * Wo; ++i) acc_b += go[i];
        gb[co] = acc_b;
        for (int64_t c = 0; c < C; ++c) {
            const double* xc = x + c * H * W;
            for (int64_t ki = 0; ki < k; ++ki)
                for (int64_t kj = 0; kj < k; ++kj) {
                    // Four independent accumulators so the reduction
                    // vectorizes without FP reassociation.
                    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                    for (int64_t ho = 0; ho < Ho; ++ho) {
                        const int64_t h = ho * stride - pad + ki;
                        if (h < 0 || h >= H) continue;
                        const double* src = xc + h * W;
                        const double* g = go + ho * Wo;
                        const int64_t off = kj - pad;
                        int64_t lo = off < 0 ? (-off + stride - 1) / stride : 0;
                        int64_t hi = (W - 1 - off) / stride;
                        if (hi >= Wo) hi = Wo - 1;
                        if (stride == 1) {
                            const double* sp = src + off;
                            int64_t wo = lo;
                            for (; wo + 3 <= hi; wo += 4) {
                                a0 += g[wo] * sp[wo];
                                a1 += g[wo + 1] * sp[wo + 1];
                                a2 += g[wo + 2] * sp[wo + 2];
                                a3 += g[wo + 3] * sp[wo + 3];
                            }
                            for (; wo <= hi; ++wo) a0 += g[wo] * sp[wo];
                        } else {
                            for (int64_t wo = lo; wo <= hi; ++wo)
                                a0 += g[wo] * src[wo * stride + off];
                        }
                    }
                    gw[((co * C + c) * k + ki) * k + kj] = ((a0 + a1) + (a2 + a3));
                }
        }
    }
}

void col2im_accum(const double* col, int64_t C, int64_t H, int64_t W, int64_t k, int64_t stride,
                  int64_t pad, int64_t Ho, int64_t Wo, double* gx) {
    const int64_t patch = Ho * Wo;
    for (int64_t c = 0; c < C; ++c) {
        double* gxc = gx + c * H * W;
        for (int64_t ki = 0; ki < k; ++ki) {
            for (int64_t kj = 0; kj < k; ++kj) {
                const double* row = col + ((c * k + ki) * k + kj) * patch;
                const int64_t off = kj - pad;
                int64_t lo = off < 0 ? (-off + stride - 1) / stride : 0;
                int64_t hi = (W - 1 - off) / stride;
                if (hi >= Wo) hi = Wo - 1;
                for (int64_t ho = 0; ho < Ho; ++ho) {
                    const int64_t h = ho * stride - pad + ki;
                    if (h < 0 || h >= H) continue;
                    const double* src = row + ho * Wo;
                    double* dst = gxc + h * W;
                    if (stride == 1) {
                        double* d = dst + off;
                        for (int64_t wo = lo; wo <= hi; ++wo) d[wo] += src[wo];
                    } else {
                        for (int64_t wo = lo; wo <= hi; ++wo) dst[wo * stride + off] += src[wo];
                    }
                }
            }
        }
    }
}

}  // namespace

Variable add(const Variable& a, const Variable& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.value().shape());
    const int64_t n = out.numel();
    const double* av = a.value().data();
    const double* bv = b.value().data();
    double* ov = out.data();
#pragma omp parallel for simd schedule(static) if (n > 65536)
    for (int64_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
    return Variable::make(std::move(out), "add", {a, b}, [a, b](Node& node) {
        if (a.requires_grad()) a.node()->accumulate(node.grad);
        if (b.requires_grad()) b.node()->accumulate(node.grad);
    });
}

Variable sub(const Variable& a, const Variable& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.value().shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a.value()[i] - b.value()[i];
    return Variable::make(std::move(out), "sub", {a, b}, [a, b](Node& node) {
        if (a.requires_grad()) a.node()->accumulate(node.grad);
        if (b.requires_grad()) {
            Tensor g(node.grad.shape());
            for (int64_t i = 0; i < g.numel(); ++i) g[i] = -node.grad[i];
            b.node()->accumulate(g);
        }
    });
}

Variable mul(const Variable& a, const Variable& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.value().shape());
    const int64_t n = out.numel();
    const double* av = a.value().data();
    const double* bv = b.value().data();
    double* ov = out.data();
#pragma omp parallel for simd schedule(static) if (n > 65536)
    for (int64_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
    return Variable::make(std::move(out), "mul", {a, b}, [a, b](Node& node) {
        const int64_t n = node.grad.numel();
        if (a.requires_grad()) {
            Tensor g(node.grad.shape());
            for (int64_t i = 0; i < n; ++i) g[i] = node.grad[i] * b.value()[i];
            a.node()->accumulate(g);
        }
        if (b.requires_grad()) {
            Tensor g(node.grad.shape());
            for (int64_t i = 0; i < n; ++i) g[i] = node.grad[i] * a.value()[i];
            b.node()->accumulate(g);
        }
    });
}

Variable scale(const Variable& a, double s) {
    Tensor out(a.value().shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a.value()[i] * s;
    return Variable::make(std::move(out), "scale", {a}, [a, s](Node& node) {
        Tensor g(node.grad.shape());
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = node.grad[i] * s;
        a.node()->accumulate(g);
    });
}

Variable add_scalar(const Variable& a, double s) {
    Tensor out(a.value().shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a.value()[i] + s;
    return Variable::make(std::move(out), "add_scalar", {a},
                          [a](Node& node) { a.node()->accumulate(node.grad); });
}

Variable mul_mask(const Variable& x, const Variable& m) {
    const auto& xs = x.value().shape();
    const auto& ms = m.value().shape();
    if (xs.size() != 4 || ms.size() != 4 || ms[1] != 1 || xs[0] != ms[0] || xs[2] != ms[2] ||
        xs[3] != ms[3])
        throw ShapeMismatch("mul_mask: " + x.value().shape_str() + " vs " +
                            m.value().shape_str());
    const int64_t B = xs[0], C = xs[1], HW = xs[2] * xs[3];
    Tensor out(xs);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const double* xv = x.value().data() + (b * C + c) * HW;
            const double* mv = m.value().data() + b * HW;
            double* ov = out.data() + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) ov[i] = xv[i] * mv[i];
        }
    return Variable::make(std::move(out), "mul_mask", {x, m}, [x, m, B, C, HW](Node& node) {
        if (x.requires_grad()) {
            Tensor g(x.value().shape());
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const double* gv = node.grad.data() + (b * C + c) * HW;
                    const double* mv = m.value().data() + b * HW;
                    double* dst = g.data() + (b * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) dst[i] = gv[i] * mv[i];
                }
            x.node()->accumulate(g);
        }
        if (m.requires_grad()) {
            Tensor g = Tensor::zeros(m.value().shape());
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const double* gv = node.grad.data() + (b * C + c) * HW;
                    const double* xv = x.value().data() + (b * C + c) * HW;
                    double* dst = g.data() + b * HW;
                    for (int64_t i = 0; i < HW; ++i) dst[i] += gv[i] * xv[i];
                }
            m.node()->accumulate(g);
        }
    });
}

Variable tanh(const Variable& a) {
    Tensor out(a.value().shape());
    const int64_t n = out.numel();
    const double* av = a.value().data();
    double* ov = out.data();
#pragma omp parallel for schedule(static) if (n > 16384)
    for (int64_t i = 0; i < n; ++i) ov[i] = std::tanh(av[i]);
    Tensor saved = out;
    return Variable::make(std::move(out), "tanh", {a}, [a, saved](Node& node) {
        Tensor g(node.grad.shape());
        for (int64_t i = 0; i < g.numel(); ++i)
            g[i] = node.grad[i] * (1.0 - saved[i] * saved[i]);
        a.node()->accumulate(g);
    });
}

Variable relu(const Variable& a) {
    Tensor out(a.value().shape());
    const int64_t n = out.numel();
    const double* av = a.value().data();
    double* ov = out.data();
#pragma omp parallel for simd schedule(static) if (n > 65536)
    for (int64_t i = 0; i < n; ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
    return Variable::make(std::move(out), "relu", {a}, [a](Node& node) {
        Tensor g(node.grad.shape());
        for (int64_t i = 0; i < g.numel(); ++i)
            g[i] = a.value()[i] > 0.0 ? node.grad[i] : 0.0;
        a.node()->accumulate(g);
    });
}

Variable leaky_relu(const Variable& a, double slope) {
    Tensor out(a.value().shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) {
        const double v = a.value()[i];
        out[i] = v > 0.0 ? v : slope * v;
    }
    return Variable::make(std::move(out), "leaky_relu", {a}, [a, slope](Node& node) {
        Tensor g(node.grad.shape());
        for (int64_t i = 0; i < g.numel(); ++i)
            g[i] = node.grad[i] * (a.value()[i] > 0.0 ? 1.0 : slope);
        a.node()->accumulate(g);
    });
}

Variable reshape(const Variable& a, std::vector<int64_t> shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    std::vector<int64_t> orig = a.value().shape();
    return Variable::make(std::move(out), "reshape", {a}, [a, orig](Node& node) {
        a.node()->accumulate(node.grad.reshaped(orig));
    });
}

Variable concat_dim1(const Variable& a, const Variable& b) {
    const auto& as = a.value().shape();
    const auto& bs = b.value().shape();
    if (as.size() != bs.size() || as.size() < 2 || as[0] != bs[0] ||
        tail_numel(as, 2) != tail_numel(bs, 2))
        throw ShapeMismatch("concat_dim1: " + a.value().shape_str() + " vs " +
                            b.value().shape_str());
    const int64_t B = as[0], Da = as[1], Db = bs[1], R = tail_numel(as, 2);
    std::vector<int64_t> oshape = as;
    oshape[1] = Da + Db;
    Tensor out(oshape);
    for (int64_t i = 0; i < B; ++i) {
        std::memcpy(out.data() + i * (Da + Db) * R, a.value().data() + i * Da * R,
                    sizeof(double) * Da * R);
        std::memcpy(out.data() + (i * (Da + Db) + Da) * R, b.value().data() + i * Db * R,
                    sizeof(double) * Db * R);
    }
    return Variable::make(std::move(out), "concat_dim1", {a, b}, [a, b, B, Da, Db, R](Node& node) {
        if (a.requires_grad()) {
            Tensor g(a.value().shape());
            for (int64_t i = 0; i < B; ++i)
                std::memcpy(g.data() + i * Da * R, node.grad.data() + i * (Da + Db) * R,
                            sizeof(double) * Da * R);
            a.node()->accumulate(g);
        }
        if (b.requires_grad()) {
            Tensor g(b.value().shape());
            for (int64_t i = 0; i < B; ++i)
                std::memcpy(g.data() + i * Db * R,
                            node.grad.data() + (i * (Da + Db) + Da) * R, sizeof(double) * Db * R);
            b.node()->accumulate(g);
        }
    });
}

Variable slice_dim1(const Variable& a, int64_t start, int64_t len) {
    const auto& as = a.value().shape();
    if (as.size() < 2 || start < 0 || start + len > as[1])
        throw ShapeMismatch("slice_dim1: bad range");
    const int64_t B = as[0], D = as[1], R = tail_numel(as, 2);
    std::vector<int64_t> oshape = as;
    oshape[1] = len;
    Tensor out(oshape);
    for (int64_t i = 0; i < B; ++i)
        std::memcpy(out.data() + i * len * R, a.value().data() + (i * D + start) * R,
                    sizeof(double) * len * R);
    return Variable::make(std::move(out), "slice_dim1", {a}, [a, B, D, R, start, len](Node& node) {
        Tensor g = Tensor::zeros(a.value().shape());
        for (int64_t i = 0; i < B; ++i)
            std::memcpy(g.data() + (i * D + start) * R, node.grad.data() + i * len * R,
                        sizeof(double) * len * R);
        a.node()->accumulate(g);
    });
}

Variable mean_all(const Variable& a) {
    const int64_t n = a.value().numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += a.value()[i];
    return Variable::make(Tensor::scalar(s / static_cast<double>(n)), "mean", {a},
                          [a, n](Node& node) {
                              const double g = node.grad[0] / static_cast<double>(n);
                              Tensor t = Tensor::full(a.value().shape(), g);
                              a.node()->accumulate(t);
                          });
}

Variable sum_all(const Variable& a) {
    const int64_t n = a.value().numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += a.value()[i];
    return Variable::make(Tensor::scalar(s), "sum", {a}, [a](Node& node) {
        Tensor t = Tensor::full(a.value().shape(), node.grad[0]);
        a.node()->accumulate(t);
    });
}

Variable l1(const Variable& a, const Variable& b) {
    check_same_shape(a, b, "l1");
    const int64_t n = a.value().numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += std::abs(a.value()[i] - b.value()[i]);
    return Variable::make(Tensor::scalar(s / static_cast<double>(n)), "l1", {a, b},
                          [a, b, n](Node& node) {
                              const double g = node.grad[0] / static_cast<double>(n);
                              if (a.requires_grad()) {
                                  Tensor t(a.value().shape());
                                  for (int64_t i = 0; i < n; ++i) {
                                      const double d = a.value()[i] - b.value()[i];
                                      t[i] = d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
                                  }
                                  a.node()->accumulate(t);
                              }
                              if (b.requires_grad()) {
                                  Tensor t(b.value().shape());
                                  for (int64_t i = 0; i < n; ++i) {
                                      const double d = a.value()[i] - b.value()[i];
                                      t[i] = d > 0.0 ? -g : (d < 0.0 ? g : 0.0);
                                  }
                                  b.node()->accumulate(t);
                              }
                          });
}

Variable bce_with_logits(const Variable& logits, double target) {
    const int64_t n = logits.value().numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double x = logits.value()[i];
        s += std::max(x, 0.0) - x * target + std::log1p(std::exp(-std::abs(x)));
    }
    return Variable::make(Tensor::scalar(s / static_cast<double>(n)), "bce_with_logits", {logits},
                          [logits, target, n](Node& node) {
                              const double g = node.grad[0] / static_cast<double>(n);
                              Tensor t(logits.value().shape());
                              for (int64_t i = 0; i < n; ++i) {
                                  const double x = logits.value()[i];
                                  const double sig = 1.0 / (1.0 + std::exp(-x));
                                  t[i] = g * (sig - target);
                              }
                              logits.node()->accumulate(t);
                          });
}

Variable linear(const Variable& x, const Variable& w, const Variable& b) {
    const auto& xs = x.value().shape();
    const auto& ws = w.value().shape();
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1])
        throw ShapeMismatch("linear: " + x.value().shape_str() + " @ " + w.value().shape_str());
    const int64_t B = xs[0], In = xs[1], Out = ws[0];
    if (b.value().numel() != Out) throw ShapeMismatch("linear: bias size");
    Tensor out({B, Out});
    CMapM xm(x.value().data(), B, In);
    CMapM wm(w.value().data(), Out, In);
    MapM om(out.data(), B, Out);
    om.noalias() = xm * wm.transpose();
    for (int64_t i = 0; i < B; ++i)
        for (int64_t j = 0; j < Out; ++j) out[i * Out + j] += b.value()[j];
    return Variable::make(std::move(out), "linear", {x, w, b}, [x, w, b, B, In, Out](Node& node) {
        CMapM gm(node.grad.data(), B, Out);
        if (x.requires_grad()) {
            Tensor gx({B, In});
            MapM gxm(gx.data(), B, In);
            CMapM wm(w.value().data(), Out, In);
            gxm.noalias() = gm * wm;
            x.node()->accumulate(gx);
        }
        if (w.requires_grad()) {
            Tensor gw({Out, In});
            MapM gwm(gw.data(), Out, In);
            CMapM xm(x.value().data(), B, In);
            gwm.noalias() = gm.transpose() * xm;
            w.node()->accumulate(gw);
        }
        if (b.requires_grad()) {
            Tensor gb({Out});
            for (int64_t j = 0; j < Out; ++j) gb[j] = gm.col(j).sum();
            b.node()->accumulate(gb);
        }
    });
}

Variable conv2d(const Variable& x, const Variable& w, const Variable& b, int stride, int pad) {
    const auto& xs = x.value().shape();
    const auto& ws = w.value().shape();
    if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1])
        throw ShapeMismatch("conv2d: " + x.value().shape_str() + " * " + w.value().shape_str());
    const int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int64_t Cout = ws[0], k = ws[2];
    if (ws[3] != k) throw ShapeMismatch("conv2d: non-square kernel");
    const int64_t Ho = (H + 2 * pad - k) / stride + 1;
    const int64_t Wo = (W + 2 * pad - k) / stride + 1;
    if (Ho < 1 || Wo < 1) throw ShapeMismatch("conv2d: output would be empty");
    const int64_t rows = C * k * k, patch = Ho * Wo;

    const bool direct = k >= 5 || (rows <= kDirectConvFanIn && stride == 1);
    Tensor out({B, Cout, Ho, Wo});
    CMapM wm(w.value().data(), Cout, rows);
#pragma omp parallel for schedule(static)
    for (int64_t bi = 0; bi < B; ++bi) {
        if (direct) {
            direct_conv_forward(x.value().data() + bi * C * H * W, w.value().data(),
                                b.value().data(), C, H, W, Cout, k, stride, pad, Ho, Wo,
                                out.data() + bi * Cout * patch);
            continue;
        }
        detail::Storage col(static_cast<size_t>(rows * patch));
        im2col(x.value().data() + bi * C * H * W, C, H, W, k, stride, pad, Ho, Wo, col.data());
        CMapM cm(col.data(), rows, patch);
        MapM om(out.data() + bi * Cout * patch, Cout, patch);
        om.noalias() = wm * cm;
        for (int64_t co = 0; co < Cout; ++co) om.row(co).array() += b.value()[co];
    }

    return Variable::make(
        std::move(out), "conv2d", {x, w, b},
        [x, w, b, B, C, H, W, Cout, k, stride, pad, Ho, Wo, rows, patch, direct](Node& node) {
            const bool need_gx = x.requires_grad();
            // Weight and bias gradients share the per-item pass.
            const bool need_gw = w.requires_grad() || b.requires_grad();
            Tensor gx = need_gx ? Tensor::zeros(x.value().shape()) : Tensor();
            // Per-item partials, reduced in batch order afterwards so the
            // result does not depend on thread scheduling.
            Tensor gw_part = need_gw ? Tensor({B, Cout, rows}) : Tensor();
            Tensor gb_part = need_gw ? Tensor({B, Cout}) : Tensor();
            CMapM wm(w.value().data(), Cout, rows);
#pragma omp parallel for schedule(static)
            for (int64_t bi = 0; bi < B; ++bi) {
                const double* xb = x.value().data() + bi * C * H * W;
                const double* gob = node.grad.data() + bi * Cout * patch;
                if (direct) {
                    if (need_gw)
                        direct_conv_backward_weight(xb, gob, C, H, W, Cout, k, stride, pad, Ho,
                                                    Wo, gw_part.data() + bi * Cout * rows,
                                                    gb_part.data() + bi * Cout);
                    if (need_gx)
                        direct_conv_backward_input(gob, w.value().data(), C, H, W, Cout, k,
                                                   stride, pad, Ho, Wo,
                                                   gx.data() + bi * C * H * W);
                    continue;
                }
                CMapM gom(gob, Cout, patch);
                detail::Storage col(static_cast<size_t>(rows * patch));
                im2col(xb, C, H, W, k, stride, pad, Ho, Wo, col.data());
                CMapM cm(col.data(), rows, patch);
                if (need_gw) {
                    MapM gwm(gw_part.data() + bi * Cout * rows, Cout, rows);
                    gwm.noalias() = gom * cm.transpose();
                    for (int64_t co = 0; co < Cout; ++co)
                        gb_part[bi * Cout + co] = gom.row(co).sum();
                }
                if (need_gx) {
                    detail::Storage gcol(static_cast<size_t>(rows * patch));
                    MapM gcm(gcol.data(), rows, patch);
                    gcm.noalias() = wm.transpose() * gom;
                    col2im_accum(gcol.data(), C, H, W, k, stride, pad, Ho, Wo,
                                 gx.data() + bi * C * H * W);
                }
            }
            if (need_gx) x.node()->accumulate(gx);
            if (need_gw) {
                Tensor gw = Tensor::zeros(w.value().shape());
                Tensor gb = Tensor::zeros(b.value().shape());
                for (int64_t bi = 0; bi < B; ++bi) {
                    const double* p = gw_part.data() + bi * Cout * rows;
                    for (int64_t i = 0; i < Cout * rows; ++i) gw[i] += p[i];
                    for (int64_t co = 0; co < Cout; ++co) gb[co] += gb_part[bi * Cout + co];
                }
                if (w.requires_grad()) w.node()->accumulate(gw);
                if (b.requires_grad()) b.node()->accumulate(gb);
            }
        });
}

Variable maxpool2x2(const Variable& x) {
    const auto& xs = x.value().shape();
    if (xs.size() != 4 || xs[2] % 2 != 0 || xs[3] % 2 != 0)
        throw ShapeMismatch("maxpool2x2: bad input " + x.value().shape_str());
    const int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int64_t Ho = H / 2, Wo = W / 2;
    Tensor out({B, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(out.numel()));
#pragma omp parallel for schedule(static)
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* src = x.value().data() + bc * H * W;
        double* dst = out.data() + bc * Ho * Wo;
        int32_t* am = argmax->data() + bc * Ho * Wo;
        for (int64_t ho = 0; ho < Ho; ++ho)
            for (int64_t wo = 0; wo < Wo; ++wo) {
                const int64_t base = 2 * ho * W + 2 * wo;
                int64_t best = base;
                for (int64_t off : {int64_t(1), W, W + 1})
                    if (src[base + off] > src[best]) best = base + off;
                dst[ho * Wo + wo] = src[best];
                am[ho * Wo + wo] = static_cast<int32_t>(best);
            }
    }
    return Variable::make(std::move(out), "maxpool2x2", {x}, [x, argmax, B, C, H, W, Ho, Wo](Node& node) {
        Tensor g = Tensor::zeros(x.value().shape());
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const double* gsrc = node.grad.data() + bc * Ho * Wo;
            const int32_t* am = argmax->data() + bc * Ho * Wo;
            double* gdst = g.data() + bc * H * W;
            for (int64_t i = 0; i < Ho * Wo; ++i) gdst[am[i]] += gsrc[i];
        }
        x.node()->accumulate(g);
    });
}

Variable instance_norm(const Variable& x, const Variable& gamma, const Variable& beta,
                       double eps) {
    const auto& xs = x.value().shape();
    if (xs.size() != 4) throw ShapeMismatch("instance_norm: need 4-d input");
    const int64_t B = xs[0], C = xs[1], M = xs[2] * xs[3];
    if (gamma.value().numel() != C || beta.value().numel() != C)
        throw ShapeMismatch("instance_norm: affine parameter size");
    Tensor out(xs);
    Tensor mean({B, C}), invstd({B, C});
#pragma omp parallel for schedule(static)
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* src = x.value().data() + bc * M;
        double mu = 0.0;
        for (int64_t i = 0; i < M; ++i) mu += src[i];
        mu /= static_cast<double>(M);
        double var = 0.0;
        for (int64_t i = 0; i < M; ++i) var += (src[i] - mu) * (src[i] - mu);
        var /= static_cast<double>(M);
        const double is = 1.0 / std::sqrt(var + eps);
        mean[bc] = mu;
        invstd[bc] = is;
        const double g = gamma.value()[bc % C], b = beta.value()[bc % C];
        double* dst = out.data() + bc * M;
        for (int64_t i = 0; i < M; ++i) dst[i] = g * (src[i] - mu) * is + b;
    }
    return Variable::make(
        std::move(out), "instance_norm", {x, gamma, beta},
        [x, gamma, beta, mean, invstd, B, C, M](Node& node) {
            const bool need_gx = x.requires_grad();
            Tensor gx = need_gx ? Tensor(x.value().shape()) : Tensor();
            Tensor gg_part = Tensor::zeros({B, C}), gb_part = Tensor::zeros({B, C});
#pragma omp parallel for schedule(static)
            for (int64_t bc = 0; bc < B * C; ++bc) {
                const double* src = x.value().data() + bc * M;
                const double* gy = node.grad.data() + bc * M;
                const double mu = mean[bc], is = invstd[bc];
                const double g = gamma.value()[bc % C];
                double sum_gy = 0.0, sum_gy_xhat = 0.0;
                for (int64_t i = 0; i < M; ++i) {
                    const double xhat = (src[i] - mu) * is;
                    sum_gy += gy[i];
                    sum_gy_xhat += gy[i] * xhat;
                }
                gg_part[bc] = sum_gy_xhat;
                gb_part[bc] = sum_gy;
                if (need_gx) {
                    const double mg = sum_gy / static_cast<double>(M);
                    const double mgx = sum_gy_xhat / static_cast<double>(M);
                    double* dst = gx.data() + bc * M;
                    for (int64_t i = 0; i < M; ++i) {
                        const double xhat = (src[i] - mu) * is;
                        dst[i] = g * is * (gy[i] - mg - xhat * mgx);
                    }
                }
            }
            if (need_gx) x.node()->accumulate(gx);
            if (gamma.requires_grad() || beta.requires_grad()) {
                Tensor gg = Tensor::zeros({C});
                Tensor gb = Tensor::zeros({C});
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t c = 0; c < C; ++c) {
                        gg[c] += gg_part[b * C + c];
                        gb[c] += gb_part[b * C + c];
                    }
                if (gamma.requires_grad()) gamma.node()->accumulate(gg);
                if (beta.requires_grad()) beta.node()->accumulate(gb);
            }
        });
}

Variable upsample_nearest2(const Variable& x) {
    const auto& xs = x.value().shape();
    if (xs.size() != 4) throw ShapeMismatch("upsample_nearest2: need 4-d input");
    const int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    Tensor out({B, C, 2 * H, 2 * W});
#pragma omp parallel for schedule(static)
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* src = x.value().data() + bc * H * W;
        double* dst = out.data() + bc * 4 * H * W;
        for (int64_t h = 0; h < H; ++h)
            for (int64_t w = 0; w < W; ++w) {
                const double v = src[h * W + w];
                double* d = dst + 2 * h * 2 * W + 2 * w;
                d[0] = v;
                d[1] = v;
                d[2 * W] = v;
                d[2 * W + 1] = v;
            }
    }
    return Variable::make(std::move(out), "upsample_nearest2", {x}, [x, B, C, H, W](Node& node) {
        Tensor g(x.value().shape());
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const double* gsrc = node.grad.data() + bc * 4 * H * W;
            double* gdst = g.data() + bc * H * W;
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) {
                    const double* s = gsrc + 2 * h * 2 * W + 2 * w;
                    gdst[h * W + w] = s[0] + s[1] + s[2 * W] + s[2 * W + 1];
                }
        }
        x.node()->accumulate(g);
    });
}

Variable bilinear_resize(const Variable& x, int64_t out_h, int64_t out_w) {
    const auto& xs = x.value().shape();
    if (xs.size() != 4) throw ShapeMismatch("bilinear_resize: need 4-d input");
    const int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    if (out_h == H && out_w == W) return x;
    Tensor out({B, C, out_h, out_w});
    const double sh = static_cast<double>(H) / out_h, sw = static_cast<double>(W) / out_w;
    // Border handling is clamp-to-edge.
    auto clampi = [](int64_t v, int64_t hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
#pragma omp parallel for schedule(static)
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* src = x.value().data() + bc * H * W;
        double* dst = out.data() + bc * out_h * out_w;
        for (int64_t i = 0; i < out_h; ++i) {
            const double py = (i + 0.5) * sh - 0.5;
            const int64_t y0 = static_cast<int64_t>(std::floor(py));
            const double wy = py - y0;
            const int64_t y0c = clampi(y0, H - 1), y1c = clampi(y0 + 1, H - 1);
            for (int64_t j = 0; j < out_w; ++j) {
                const double px = (j + 0.5) * sw - 0.5;
                const int64_t x0 = static_cast<int64_t>(std::floor(px));
                const double wx = px - x0;
                const int64_t x0c = clampi(x0, W - 1), x1c = clampi(x0 + 1, W - 1);
                dst[i * out_w + j] = (1 - wy) * ((1 - wx) * src[y0c * W + x0c] +
                                                 wx * src[y0c * W + x1c]) +
                                     wy * ((1 - wx) * src[y1c * W + x0c] +
                                           wx * src[y1c * W + x1c]);
            }
        }
    }
    return Variable::make(std::move(out), "bilinear_resize", {x},
                          [x, B, C, H, W, out_h, out_w, sh, sw](Node& node) {
                              auto clampi = [](int64_t v, int64_t hi) {
                                  return v < 0 ? 0 : (v > hi ? hi : v);
                              };
                              Tensor g = Tensor::zeros(x.value().shape());
                              for (int64_t bc = 0; bc < B * C; ++bc) {
                                  const double* gsrc = node.grad.data() + bc * out_h * out_w;
                                  double* gdst = g.data() + bc * H * W;
                                  for (int64_t i = 0; i < out_h; ++i) {
                                      const double py = (i + 0.5) * sh - 0.5;
                                      const int64_t y0 = static_cast<int64_t>(std::floor(py));
                                      const double wy = py - y0;
                                      const int64_t y0c = clampi(y0, H - 1),
                                                    y1c = clampi(y0 + 1, H - 1);
                                      for (int64_t j = 0; j < out_w; ++j) {
                                          const double px = (j + 0.5) * sw - 0.5;
                                          const int64_t x0 = static_cast<int64_t>(std::floor(px));
                                          const double wx = px - x0;
                                          const int64_t x0c = clampi(x0, W - 1),
                                                        x1c = clampi(x0 + 1, W - 1);
                                          const double gv = gsrc[i * out_w + j];
                                          gdst[y0c * W + x0c] += (1 - wy) * (1 - wx) * gv;
                                          gdst[y0c * W + x1c] += (1 - wy) * wx * gv;
                                          gdst[y1c * W + x0c] += wy * (1 - wx) * gv;
                                          gdst[y1c * W + x1c] += wy * wx * gv;
                                      }
                                  }
                              }
                              x.node()->accumulate(g);
                          });
}

void grid_sample_kernel(const Tensor& x, const Tensor& grid, double fill, Tensor& out) {
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Ho = grid.dim(1), Wo = grid.dim(2);
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < B; ++b) {
        const double* gp = grid.data() + b * Ho * Wo * 2;
        for (int64_t i = 0; i < Ho; ++i)
            for (int64_t j = 0; j < Wo; ++j) {
                const double gx = gp[(i * Wo + j) * 2];
                const double gy = gp[(i * Wo + j) * 2 + 1];
                const double px = (gx + 1.0) * W / 2.0 - 0.5;
                const double py = (gy + 1.0) * H / 2.0 - 0.5;
                const int64_t x0 = static_cast<int64_t>(std::floor(px));
                const int64_t y0 = static_cast<int64_t>(std::floor(py));
                const double wx = px - x0, wy = py - y0;
                for (int64_t c = 0; c < C; ++c) {
                    const double* src = x.data() + (b * C + c) * H * W;
                    auto at = [&](int64_t yy, int64_t xx) {
                        return (yy >= 0 && yy < H && xx >= 0 && xx < W) ? src[yy * W + xx] : fill;
                    };
                    out.data()[((b * C + c) * Ho + i) * Wo + j] =
                        (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x0 + 1)) +
                        wy * ((1 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1));
                }
            }
    }
}

Variable grid_sample(const Variable& x, const Variable& grid, double fill) {
    const auto& xs = x.value().shape();
    const auto& gs = grid.value().shape();
    if (xs.size() != 4 || gs.size() != 4 || gs[3] != 2 || xs[0] != gs[0])
        throw ShapeMismatch("grid_sample: " + x.value().shape_str() + " with grid " +
                            grid.value().shape_str());
    const int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int64_t Ho = gs[1], Wo = gs[2];
    Tensor out({B, C, Ho, Wo});
    grid_sample_kernel(x.value(), grid.value(), fill, out);
    return Variable::make(
        std::move(out), "grid_sample", {x, grid},
        [x, grid, fill, B, C, H, W, Ho, Wo](Node& node) {
            const bool need_gx = x.requires_grad();
            const bool need_gg = grid.requires_grad();
            Tensor gx = need_gx ? Tensor::zeros(x.value().shape()) : Tensor();
            Tensor gg = need_gg ? Tensor::zeros(grid.value().shape()) : Tensor();
#pragma omp parallel for schedule(static)
            for (int64_t b = 0; b < B; ++b) {
                const double* gp = grid.value().data() + b * Ho * Wo * 2;
                for (int64_t i = 0; i < Ho; ++i)
                    for (int64_t j = 0; j < Wo; ++j) {
                        const double gxn = gp[(i * Wo + j) * 2];
                        const double gyn = gp[(i * Wo + j) * 2 + 1];
                        const double px = (gxn + 1.0) * W / 2.0 - 0.5;
                        const double py = (gyn + 1.0) * H / 2.0 - 0.5;
                        const int64_t x0 = static_cast<int64_t>(std::floor(px));
                        const int64_t y0 = static_cast<int64_t>(std::floor(py));
                        const double wx = px - x0, wy = py - y0;
                        double dwx_acc = 0.0, dwy_acc = 0.0;
                        for (int64_t c = 0; c < C; ++c) {
                            const double go =
                                node.grad.data()[((b * C + c) * Ho + i) * Wo + j];
                            if (go == 0.0 && !need_gg) continue;
                            const double* src = x.value().data() + (b * C + c) * H * W;
                            auto at = [&](int64_t yy, int64_t xx) {
                                return (yy >= 0 && yy < H && xx >= 0 && xx < W)
                                           ? src[yy * W + xx]
                                           : fill;
                            };
                            const double v00 = at(y0, x0), v10 = at(y0, x0 + 1);
                            const double v01 = at(y0 + 1, x0), v11 = at(y0 + 1, x0 + 1);
                            if (need_gg) {
                                dwx_acc += go * ((1 - wy) * (v10 - v00) + wy * (v11 - v01));
                                dwy_acc += go * ((1 - wx) * (v01 - v00) + wx * (v11 - v10));
                            }
                            if (need_gx) {
                                double* dst = gx.data() + (b * C + c) * H * W;
                                auto put = [&](int64_t yy, int64_t xx, double wv) {
                                    if (yy >= 0 && yy < H && xx >= 0 && xx < W)
                                        dst[yy * W + xx] += wv * go;
                                };
                                put(y0, x0, (1 - wy) * (1 - wx));
                                put(y0, x0 + 1, (1 - wy) * wx);
                                put(y0 + 1, x0, wy * (1 - wx));
                                put(y0 + 1, x0 + 1, wy * wx);
                            }
                        }
                        if (need_gg) {
                            gg.data()[(b * Ho * Wo + i * Wo + j) * 2] = dwx_acc * W / 2.0;
                            gg.data()[(b * Ho * Wo + i * Wo + j) * 2 + 1] = dwy_acc * H / 2.0;
                        }
                    }
            }
            if (need_gx) x.node()->accumulate(gx);
            if (need_gg) grid.node()->accumulate(gg);
        });
}

}  // namespace gadan::ops
