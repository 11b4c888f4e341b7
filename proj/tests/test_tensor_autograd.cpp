#include <doctest.h>

#include <cmath>
#include <functional>

#include "core/error.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"

using namespace gadan;

namespace {

// Central-difference check of d(scalar)/d(leaf) over sampled coordinates.
double fd_worst_rel(const Tensor& leaf_init,
                    const std::function<Variable(const Variable&)>& fn, int ncoords,
                    uint64_t pick_seed = 99, double h = 1e-5) {
    Variable leaf = Variable::leaf(leaf_init.clone(), true);
    backward(fn(leaf));
    Tensor t = leaf_init.clone();
    auto eval = [&](const Tensor& tt) { return fn(Variable::leaf(tt.clone())).value().item(); };
    Rng pick(pick_seed);
    double worst = 0.0;
    for (int k = 0; k < ncoords; ++k) {
        const int64_t c = static_cast<int64_t>(pick.below(t.numel()));
        const double saved = t[c];
        t[c] = saved + h;
        const double plus = eval(t);
        t[c] = saved - h;
        const double minus = eval(t);
        t[c] = saved;
        const double fd = (plus - minus) / (2.0 * h);
        const double a = leaf.grad()[c];
        worst = std::max(worst, std::abs(a - fd) / std::max(1e-8, std::abs(a) + std::abs(fd)));
    }
    return worst;
}

Variable weighted_mean(const Variable& v, const Tensor& w) {
    return ops::mean_all(ops::mul(v, Variable::leaf(w)));
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor t = Tensor::zeros({2, 3});
    CHECK(t.numel() == 6);
    for (int i = 0; i < 6; ++i) CHECK(t[i] == 0.0);
    Tensor u = t;  // shallow
    u[0] = 5.0;
    CHECK(t[0] == 5.0);
    Tensor v = t.clone();
    v[0] = 7.0;
    CHECK(t[0] == 5.0);
    CHECK_THROWS(t.reshaped({4, 2}));
    CHECK(t.reshaped({3, 2}).dim(0) == 3);
}

TEST_CASE("rng determinism and serialization") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    const std::string state = a.serialize();
    const double next = a.normal();
    Rng c;
    c.deserialize(state);
    CHECK(c.normal() == next);
}

TEST_CASE("backward accumulates through shared subgraphs") {
    // s = mean(x * x) + mean(x): d/dx = 2x/n + 1/n
    Rng rng(5);
    Tensor x = rng.normal_tensor({3, 4});
    Variable xv = Variable::leaf(x, true);
    Variable s = ops::add(ops::mean_all(ops::mul(xv, xv)), ops::mean_all(xv));
    backward(s);
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(xv.grad()[i] == doctest::Approx(2.0 * x[i] / 12.0 + 1.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("conv2d matches finite differences") {
    Rng rng(42);
    Tensor x = rng.normal_tensor({2, 3, 8, 8});
    Tensor w3 = rng.normal_tensor({4, 3, 3, 3}, 0.3);
    Tensor w7 = rng.normal_tensor({2, 3, 7, 7}, 0.2);
    Tensor b4 = rng.normal_tensor({4}, 0.3);
    Tensor b2 = rng.normal_tensor({2}, 0.3);

    SUBCASE("k3 s1 wrt input, weight and bias") {
        Tensor wt = Rng(1).normal_tensor({2, 4, 8, 8});
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return weighted_mean(
                      ops::conv2d(v, Variable::leaf(w3), Variable::leaf(b4), 1, 1), wt);
              }, 30) < 1e-6);
        CHECK(fd_worst_rel(w3, [&](const Variable& v) {
                  return weighted_mean(
                      ops::conv2d(Variable::leaf(x), v, Variable::leaf(b4), 1, 1), wt);
              }, 30) < 1e-6);
        CHECK(fd_worst_rel(b4, [&](const Variable& v) {
                  return weighted_mean(
                      ops::conv2d(Variable::leaf(x), Variable::leaf(w3), v, 1, 1), wt);
              }, 4) < 1e-6);
    }
    SUBCASE("k3 s2") {
        Tensor wt = Rng(2).normal_tensor({2, 4, 4, 4});
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return weighted_mean(
                      ops::conv2d(v, Variable::leaf(w3), Variable::leaf(b4), 2, 1), wt);
              }, 30) < 1e-6);
        CHECK(fd_worst_rel(w3, [&](const Variable& v) {
                  return weighted_mean(
                      ops::conv2d(Variable::leaf(x), v, Variable::leaf(b4), 2, 1), wt);
              }, 30) < 1e-6);
    }
    SUBCASE("k7 (shifted-row path)") {
        Tensor wt = Rng(3).normal_tensor({2, 2, 8, 8});
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return weighted_mean(
                      ops::conv2d(v, Variable::leaf(w7), Variable::leaf(b2), 1, 3), wt);
              }, 30) < 1e-6);
        CHECK(fd_worst_rel(w7, [&](const Variable& v) {
                  return weighted_mean(
                      ops::conv2d(Variable::leaf(x), v, Variable::leaf(b2), 1, 3), wt);
              }, 30) < 1e-6);
    }
    SUBCASE("k4 s1 (shrinking output)") {
        Tensor w4 = rng.normal_tensor({4, 3, 4, 4}, 0.3);
        Variable out =
            ops::conv2d(Variable::leaf(x), Variable::leaf(w4), Variable::leaf(b4), 1, 1);
        CHECK(out.value().dim(2) == 7);
        Tensor wt = Rng(4).normal_tensor({2, 4, 7, 7});
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return weighted_mean(
                      ops::conv2d(v, Variable::leaf(w4), Variable::leaf(b4), 1, 1), wt);
              }, 30) < 1e-6);
    }
    SUBCASE("shape checks") {
        CHECK_THROWS_AS(
            ops::conv2d(Variable::leaf(x), Variable::leaf(rng.normal_tensor({4, 2, 3, 3})),
                        Variable::leaf(b4), 1, 1),
            ShapeMismatch);
    }
}

TEST_CASE("pool, norm, resize, upsample, linear match finite differences") {
    Rng rng(7);
    Tensor x = rng.normal_tensor({2, 3, 8, 8});
    SUBCASE("maxpool2x2") {
        Tensor wt = Rng(5).normal_tensor({2, 3, 4, 4});
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return weighted_mean(ops::maxpool2x2(v), wt);
              }, 30) < 1e-6);
    }
    SUBCASE("instance_norm") {
        Tensor g = rng.normal_tensor({3});
        Tensor be = rng.normal_tensor({3});
        Tensor wt = Rng(6).normal_tensor({2, 3, 8, 8});
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return weighted_mean(
                      ops::instance_norm(v, Variable::leaf(g), Variable::leaf(be)), wt);
              }, 30) < 1e-5);
        CHECK(fd_worst_rel(g, [&](const Variable& v) {
                  return weighted_mean(
                      ops::instance_norm(Variable::leaf(x), v, Variable::leaf(be)), wt);
              }, 3) < 1e-6);
        CHECK(fd_worst_rel(be, [&](const Variable& v) {
                  return weighted_mean(
                      ops::instance_norm(Variable::leaf(x), Variable::leaf(g), v), wt);
              }, 3) < 1e-6);
    }
    SUBCASE("bilinear_resize both directions") {
        Tensor wt_up = Rng(7).normal_tensor({2, 3, 16, 16});
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return weighted_mean(ops::bilinear_resize(v, 16, 16), wt_up);
              }, 30) < 1e-6);
        Tensor wt_down = Rng(8).normal_tensor({2, 3, 4, 4});
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return weighted_mean(ops::bilinear_resize(v, 4, 4), wt_down);
              }, 30) < 1e-6);
    }
    SUBCASE("upsample_nearest2") {
        Tensor wt = Rng(9).normal_tensor({2, 3, 16, 16});
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return weighted_mean(ops::upsample_nearest2(v), wt);
              }, 30) < 1e-6);
    }
    SUBCASE("linear") {
        Tensor xf = rng.normal_tensor({4, 6});
        Tensor wf = rng.normal_tensor({5, 6}, 0.4);
        Tensor bf = rng.normal_tensor({5}, 0.4);
        Tensor wt = Rng(10).normal_tensor({4, 5});
        CHECK(fd_worst_rel(xf, [&](const Variable& v) {
                  return weighted_mean(ops::linear(v, Variable::leaf(wf), Variable::leaf(bf)),
                                       wt);
              }, 24) < 1e-6);
        CHECK(fd_worst_rel(wf, [&](const Variable& v) {
                  return weighted_mean(ops::linear(Variable::leaf(xf), v, Variable::leaf(bf)),
                                       wt);
              }, 30) < 1e-6);
    }
}

TEST_CASE("masking, concat and losses match finite differences") {
    Rng rng(11);
    Tensor x = rng.normal_tensor({2, 3, 8, 8});
    Tensor m = rng.normal_tensor({2, 1, 8, 8});
    SUBCASE("mul_mask both args") {
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return ops::mean_all(ops::mul_mask(v, Variable::leaf(m)));
              }, 30) < 1e-6);
        CHECK(fd_worst_rel(m, [&](const Variable& v) {
                  return ops::mean_all(ops::mul_mask(Variable::leaf(x), v));
              }, 30) < 1e-6);
    }
    SUBCASE("concat and slice") {
        Tensor y = rng.normal_tensor({2, 2, 8, 8});
        Tensor wt = Rng(12).normal_tensor({2, 5, 8, 8});
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return weighted_mean(ops::concat_dim1(v, Variable::leaf(y)), wt);
              }, 30) < 1e-6);
        Tensor wt2 = Rng(13).normal_tensor({2, 2, 8, 8});
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return weighted_mean(ops::slice_dim1(v, 1, 2), wt2);
              }, 30) < 1e-6);
    }
    SUBCASE("l1 and bce") {
        Tensor y = rng.normal_tensor({2, 3, 8, 8});
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return ops::l1(v, Variable::leaf(y));
              }, 30) < 1e-6);
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return ops::bce_with_logits(v, 1.0);
              }, 30) < 1e-6);
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return ops::bce_with_logits(v, 0.0);
              }, 30) < 1e-6);
    }
    SUBCASE("activation chain") {
        CHECK(fd_worst_rel(x, [&](const Variable& v) {
                  return ops::mean_all(ops::tanh(ops::leaky_relu(ops::relu(v), 0.2)));
              }, 30) < 1e-5);
    }
}

TEST_CASE("grid_sample: identity grid copies exactly, fd for both inputs") {
    Rng rng(21);
    const int64_t hs = 8;
    Tensor x = rng.normal_tensor({1, 2, hs, hs});
    Tensor grid({1, hs, hs, 2});
    for (int64_t i = 0; i < hs; ++i)
        for (int64_t j = 0; j < hs; ++j) {
            grid[(i * hs + j) * 2] = (2.0 * j + 1.0) / hs - 1.0;
            grid[(i * hs + j) * 2 + 1] = (2.0 * i + 1.0) / hs - 1.0;
        }
    Variable out = ops::grid_sample(Variable::leaf(x), Variable::leaf(grid), -1.0);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(out.value()[i] == x[i]);

    Tensor pg = grid.clone();
    Rng prng(22);
    for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += 0.03 * prng.normal();
    Tensor wt = Rng(23).normal_tensor({1, 2, hs, hs});
    CHECK(fd_worst_rel(x, [&](const Variable& v) {
              return weighted_mean(ops::grid_sample(v, Variable::leaf(pg), -1.0), wt);
          }, 30) < 1e-6);
    CHECK(fd_worst_rel(pg, [&](const Variable& v) {
              return weighted_mean(ops::grid_sample(Variable::leaf(x), v, -1.0), wt);
          }, 30, 24, 1e-6) < 1e-4);
}

TEST_CASE("ops are deterministic bitwise across repeated calls") {
    Rng rng(31);
    Tensor x = rng.normal_tensor({4, 8, 16, 16});
    Tensor w = rng.normal_tensor({8, 8, 3, 3}, 0.1);
    Tensor b = rng.normal_tensor({8}, 0.1);
    Tensor o1 = ops::conv2d(Variable::leaf(x), Variable::leaf(w), Variable::leaf(b), 1, 1).value();
    Tensor o2 = ops::conv2d(Variable::leaf(x), Variable::leaf(w), Variable::leaf(b), 1, 1).value();
    for (int64_t i = 0; i < o1.numel(); ++i) CHECK(o1[i] == o2[i]);
}
