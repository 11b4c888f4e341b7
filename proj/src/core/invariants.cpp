#include "core/invariants.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "core/losses.hpp"
#include "core/pipeline.hpp"
#include "core/synth.hpp"

namespace gadan::invariants {

namespace {

using geometry::TransformKind;
using geometry::TransformOperator;
using geometry::TransformParams;

TransformKind kinds[3] = {TransformKind::affine, TransformKind::homography, TransformKind::tps};

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

/// Mean L1 over the region where both masks exceed 0.99.
double interior_l1(const Tensor& a, const Tensor& b, const Tensor& mask_a, const Tensor& mask_b) {
    double sum = 0.0;
    int64_t count = 0;
    const int64_t c = a.dim(1), hw = a.dim(2) * a.dim(3);
    for (int64_t p = 0; p < hw; ++p) {
        if (mask_a[p] <= 0.99 || mask_b[p] <= 0.99) continue;
        for (int64_t ch = 0; ch < c; ++ch) sum += std::abs(a[ch * hw + p] - b[ch * hw + p]);
        count += c;
    }
    return count > 0 ? sum / count : 0.0;
}

struct Runner {
    Report report;
    void check(const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
        PropertyResult r;
        r.name = name;
        try {
            auto [pass, detail] = fn();
            r.pass = pass;
            r.detail = detail;
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        report.results.push_back(std::move(r));
    }
};

std::pair<bool, std::string> metric(double value, double tol, const char* label = "max_err") {
    std::ostringstream os;
    os.precision(3);
    os << label << "=" << std::scientific << value << " tol=" << tol;
    return {value <= tol, os.str()};
}

networks::NetConfig small_net_config(TransformKind kind) {
    networks::NetConfig cfg;
    cfg.kind = kind;
    cfg.tps_grid = 4;
    cfg.code_dim = 8;
    cfg.channels = 1;
    cfg.image_size = 32;
    cfg.loc_size = 32;
    cfg.ngf = 4;
    cfg.ndf = 4;
    cfg.n_res = 1;
    return cfg;
}

pipeline::TrainConfig small_train_config(TransformKind kind, uint64_t seed) {
    pipeline::TrainConfig cfg;
    cfg.kind = kind;
    cfg.tps_grid = 4;
    cfg.image_size = 32;
    cfg.code_dim = 8;
    cfg.channels = 1;
    cfg.loc_size = 32;
    cfg.ngf = 4;
    cfg.ndf = 4;
    cfg.n_res = 1;
    cfg.batch_size = 2;
    cfg.steps = 1;
    cfg.lr_g = 2e-4;
    cfg.lr_d = 2e-4;
    cfg.seed = seed;
    cfg.domain_x_dir = "(synthetic)";
    cfg.domain_y_dir = "(synthetic)";
    cfg.checkpoint_dir = "(unused)";
    cfg.checkpoint_every = 1;
    return cfg;
}

void add_geometry_checks(Runner& run, uint64_t seed) {
    run.check("geometry/identity_warp_exact", [&] {
        Rng rng(seed);
        double worst = 0.0;
        for (TransformKind kind : kinds) {
            Tensor x = synth::smooth_random_image(rng, 2, 1, 16, 16, 1.0, 0.9);
            TransformOperator op = geometry::build_operator(geometry::identity_params(kind));
            geometry::WarpResult w = geometry::warp(x, op);
            worst = std::max(worst, max_abs_diff(w.image, x));
            for (int64_t i = 0; i < w.mask.numel(); ++i)
                worst = std::max(worst, std::abs(w.mask[i] - 1.0));
        }
        return metric(worst, 0.0);
    });

    run.check("geometry/identity_grid_is_mesh", [&] {
        TransformOperator op =
            geometry::build_operator(geometry::identity_params(TransformKind::homography));
        Tensor grid = geometry::generate_grid(op, 8, 8);
        double worst = 0.0;
        for (int64_t i = 0; i < 8; ++i)
            for (int64_t j = 0; j < 8; ++j) {
                worst = std::max(worst,
                                 std::abs(grid[(i * 8 + j) * 2] - ((2.0 * j + 1.0) / 8 - 1.0)));
                worst = std::max(
                    worst, std::abs(grid[(i * 8 + j) * 2 + 1] - ((2.0 * i + 1.0) / 8 - 1.0)));
            }
        return metric(worst, 0.0);
    });

    run.check("geometry/double_inverse_1e-9", [&] {
        Rng rng(seed + 1);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            for (TransformKind kind : {TransformKind::affine, TransformKind::homography}) {
                TransformOperator op =
                    geometry::build_operator(synth::random_bounded_params(rng, kind, 0.3));
                TransformOperator back = geometry::invert_operator(geometry::invert_operator(op));
                worst = std::max(worst, (back.matrix - op.matrix).cwiseAbs().maxCoeff());
            }
        }
        return metric(worst, 1e-9);
    });

    run.check("geometry/product_with_inverse_is_identity", [&] {
        Rng rng(seed + 2);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            TransformOperator op = geometry::build_operator(
                synth::random_bounded_params(rng, TransformKind::homography, 0.3));
            Eigen::Matrix3d prod = op.matrix * geometry::invert_operator(op).matrix;
            prod /= prod(2, 2);
            worst = std::max(worst, (prod - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff());
        }
        return metric(worst, 1e-9);
    });

    run.check("geometry/mask_equals_warped_ones_exactly", [&] {
        Rng rng(seed + 3);
        double worst = 0.0;
        for (TransformKind kind : kinds) {
            Tensor x = synth::smooth_random_image(rng, 1, 3, 16, 16, 1.0, 0.9);
            TransformOperator op =
                geometry::build_operator(synth::random_bounded_params(rng, kind, 0.2));
            geometry::WarpResult w = geometry::warp(x, op);
            Tensor ones = Tensor::ones({1, 1, 16, 16});
            worst = std::max(worst, max_abs_diff(w.mask, geometry::warp_mask(ones, op)));
        }
        return metric(worst, 0.0);
    });

    run.check("geometry/warp_conserves_value_range", [&] {
        Rng rng(seed + 4);
        bool ok = true;
        for (int trial = 0; trial < 20 && ok; ++trial) {
            for (TransformKind kind : kinds) {
                Tensor x = synth::smooth_random_image(rng, 1, 1, 16, 16, 0.8, 0.95);
                double lo = 1e300, hi = -1e300;
                for (int64_t i = 0; i < x.numel(); ++i) {
                    lo = std::min(lo, x[i]);
                    hi = std::max(hi, x[i]);
                }
                lo = std::min(lo, -1.0);  // fill value
                hi = std::max(hi, -1.0);
                TransformOperator op =
                    geometry::build_operator(synth::random_bounded_params(rng, kind, 0.3));
                geometry::WarpResult w = geometry::warp(x, op);
                for (int64_t i = 0; i < w.image.numel(); ++i)
                    if (w.image[i] < lo - 1e-12 || w.image[i] > hi + 1e-12) ok = false;
            }
        }
        return std::make_pair(ok, std::string(ok ? "within bounds" : "bound violated"));
    });

    run.check("geometry/homography_round_trip_L1<=0.05", [&] {
        Rng rng(seed + 5);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::Matrix<double, 4, 2> offsets;
            for (int i = 0; i < 8; ++i) offsets(i / 2, i % 2) = rng.uniform(-0.5, 0.5);
            TransformOperator h =
                geometry::build_operator(synth::homography_from_corner_offsets(offsets));
            Tensor x = synth::smooth_random_image(rng, 1, 1, 32, 32, 1.5, 0.9);
            geometry::WarpResult fwd = geometry::warp(x, h);
            geometry::WarpResult back = geometry::warp(fwd.image, geometry::invert_operator(h));
            Tensor back_mask = geometry::warp_mask(fwd.mask, geometry::invert_operator(h));
            worst = std::max(worst, interior_l1(x, back.image, back.mask, back_mask));
        }
        return metric(worst, 0.05, "interior_l1");
    });

    run.check("geometry/tps_inverse_round_trip_L1<=0.08", [&] {
        Rng rng(seed + 6);
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            // Displacements up to 10% of the width.
            TransformParams p =
                synth::random_bounded_params(rng, TransformKind::tps, 0.2 * 0.5);
            TransformOperator op = geometry::build_operator(p);
            Tensor x = synth::smooth_random_image(rng, 1, 1, 32, 32, 1.5, 0.9);
            geometry::WarpResult fwd = geometry::warp(x, op);
            geometry::WarpResult back = geometry::warp(fwd.image, geometry::invert_operator(op));
            Tensor back_mask = geometry::warp_mask(fwd.mask, geometry::invert_operator(op));
            worst = std::max(worst, interior_l1(x, back.image, back.mask, back_mask));
        }
        return metric(worst, 0.08, "interior_l1");
    });
}

void add_loss_checks(Runner& run, uint64_t seed) {
    run.check("losses/identities_zero_exact", [&] {
        Rng rng(seed + 10);
        Tensor a = synth::smooth_random_image(rng, 1, 1, 8, 8, 1.0, 0.9);
        Tensor m = Tensor::full({1, 1, 8, 8}, 0.5);
        double worst = losses::appearance_cycle_loss(Variable::leaf(a), Variable::leaf(a))
                           .value()
                           .item();
        TransformOperator op = geometry::build_operator(
            synth::random_bounded_params(rng, TransformKind::homography, 0.2));
        Tensor rep = Tensor::from({1, 8}, std::vector<double>(op.rep.data(), op.rep.data() + 8));
        geometry::OperatorBatch ob = geometry::build_operator_batch(TransformKind::homography,
                                                                    Variable::leaf(rep));
        worst = std::max(worst, losses::spatial_cycle_loss(ob, ob).value().item());
        worst = std::max(
            worst, losses::region_missing_loss(Variable::leaf(m), Variable::leaf(m))
                       .value()
                       .item());
        worst = std::max(worst, losses::identity_loss(Variable::leaf(a), Variable::leaf(a),
                                                      Variable::leaf(m))
                                    .value()
                                    .item());
        return metric(worst, 0.0);
    });

    run.check("losses/symmetric_and_zero_iff_equal", [&] {
        Rng rng(seed + 11);
        Tensor a = synth::smooth_random_image(rng, 1, 1, 8, 8, 1.0, 0.9);
        Tensor b = synth::smooth_random_image(rng, 1, 1, 8, 8, 1.0, 0.9);
        const double ab =
            losses::appearance_cycle_loss(Variable::leaf(a), Variable::leaf(b)).value().item();
        const double ba =
            losses::appearance_cycle_loss(Variable::leaf(b), Variable::leaf(a)).value().item();
        const bool ok = ab == ba && ab > 0.0;
        return std::make_pair(ok, "acl(a,b)=" + std::to_string(ab));
    });

    run.check("losses/acl_positive_homogeneity", [&] {
        Rng rng(seed + 12);
        Tensor a = synth::smooth_random_image(rng, 1, 1, 8, 8, 1.0, 0.9);
        Tensor b = synth::smooth_random_image(rng, 1, 1, 8, 8, 1.0, 0.9);
        const double alpha = 0.37;
        Tensor sa = a.clone(), sb = b.clone();
        for (int64_t i = 0; i < sa.numel(); ++i) {
            sa[i] *= alpha;
            sb[i] *= alpha;
        }
        const double base =
            losses::appearance_cycle_loss(Variable::leaf(a), Variable::leaf(b)).value().item();
        const double scaled =
            losses::appearance_cycle_loss(Variable::leaf(sa), Variable::leaf(sb)).value().item();
        return metric(std::abs(scaled - alpha * base), 1e-12);
    });

    run.check("losses/scl_ignores_image_content", [&] {
        Rng rng(seed + 13);
        pipeline::Trainer trainer(small_train_config(TransformKind::homography, seed + 13));
        Tensor code = rng.normal_tensor({2, 8});
        Tensor x1 = synth::smooth_random_image(rng, 2, 1, 32, 32, 1.0, 0.9);
        pipeline::CycleBundle b1 = trainer.run_cycle(Variable::leaf(x1), Variable::leaf(code),
                                                     pipeline::Direction::x2y);
        // Same operators, different image content.
        const double scl = losses::spatial_cycle_loss(b1.h_xy_inv, b1.h_sy).value().item();
        Tensor rep_inv = b1.h_xy_inv.rep.value().clone();
        Tensor rep_sy = b1.h_sy.rep.value().clone();
        geometry::OperatorBatch o1 = geometry::build_operator_batch(
            TransformKind::homography, Variable::leaf(rep_inv));
        geometry::OperatorBatch o2 =
            geometry::build_operator_batch(TransformKind::homography, Variable::leaf(rep_sy));
        const double scl2 = losses::spatial_cycle_loss(o1, o2).value().item();
        return metric(std::abs(scl - scl2), 1e-15);
    });

    run.check("losses/cycle_loss_linear_in_components", [&] {
        losses::LossWeights w;
        w.lambda_acl = 10.0;
        w.lambda_scl = 1.0;
        w.lambda_rml = 1.0;
        // acl=1, scl=1, rml=1 with weights (10, 1) gives 12.
        Variable acl = Variable::leaf(Tensor::scalar(1.0));
        Variable scl = Variable::leaf(Tensor::scalar(1.0));
        Variable rml = Variable::leaf(Tensor::scalar(1.0));
        const double total =
            ops::add(ops::add(ops::scale(acl, w.lambda_acl), ops::scale(scl, w.lambda_scl)),
                     ops::scale(rml, w.lambda_rml))
                .value()
                .item();
        return metric(std::abs(total - 12.0), 1e-12);
    });

    run.check("losses/generator_bce_monotone", [&] {
        double prev = 1e300;
        bool ok = true;
        for (double logit : {-2.0, -1.0, 0.0, 1.0, 2.0, 4.0}) {
            const double v = losses::adversarial_losses({}, Variable::leaf(Tensor::scalar(logit)),
                                                        {}, {}, losses::AdvSide::generator)
                                 .value()
                                 .item();
            if (v >= prev) ok = false;
            prev = v;
        }
        return std::make_pair(ok, std::string("strictly decreasing toward fooling"));
    });

    run.check("losses/bce_closed_forms", [&] {
        const double log2 = std::log(2.0);
        const double at_half =
            losses::adversarial_losses(Variable::leaf(Tensor::scalar(0.0)),
                                       Variable::leaf(Tensor::scalar(0.0)), {}, {},
                                       losses::AdvSide::discriminator)
                .value()
                .item();
        const double perfect =
            losses::adversarial_losses(Variable::leaf(Tensor::scalar(30.0)),
                                       Variable::leaf(Tensor::scalar(-30.0)), {}, {},
                                       losses::AdvSide::discriminator)
                .value()
                .item();
        double worst = std::abs(at_half - 2.0 * log2);
        worst = std::max(worst, perfect);
        return metric(worst, 1e-9);
    });
}

void add_network_checks(Runner& run, uint64_t seed) {
    run.check("networks/identity_at_init", [&] {
        Rng rng(seed + 20);
        double worst = 0.0;
        for (TransformKind kind : kinds) {
            networks::Nets nets = networks::init_networks(small_net_config(kind), seed + 20);
            Tensor x = synth::smooth_random_image(rng, 2, 1, 32, 32, 1.0, 0.9);
            Tensor code = rng.normal_tensor({2, 8});
            Tensor theta =
                networks::localize(nets.ln_x, Variable::leaf(x), Variable::leaf(code)).value();
            const Eigen::VectorXd id = geometry::identity_params(kind, 4).theta;
            for (int64_t b = 0; b < 2; ++b)
                for (int i = 0; i < id.size(); ++i)
                    worst = std::max(worst, std::abs(theta[b * id.size() + i] - id[i]));
        }
        return metric(worst, 0.0);
    });

    run.check("networks/completion_pass_through_exact", [&] {
        Rng rng(seed + 21);
        networks::Nets nets =
            networks::init_networks(small_net_config(TransformKind::homography), seed + 21);
        Tensor x = synth::smooth_random_image(rng, 1, 1, 32, 32, 1.0, 0.9);
        Tensor m = Tensor::ones({1, 1, 32, 32});
        Tensor out =
            networks::complete_background(nets.g_x, Variable::leaf(x), Variable::leaf(m)).value();
        return metric(max_abs_diff(out, x), 0.0);
    });

    run.check("networks/generator_outputs_bounded", [&] {
        Rng rng(seed + 22);
        networks::Nets nets =
            networks::init_networks(small_net_config(TransformKind::homography), seed + 22);
        Tensor x = rng.normal_tensor({2, 1, 32, 32});
        Tensor out = networks::translate_appearance(nets.g_x, Variable::leaf(x)).value();
        bool ok = true;
        for (int64_t i = 0; i < out.numel(); ++i)
            if (out[i] < -1.0 || out[i] > 1.0) ok = false;
        Tensor m = Tensor::zeros({2, 1, 32, 32});
        Tensor comp =
            networks::complete_background(nets.g_x, Variable::leaf(x), Variable::leaf(m)).value();
        for (int64_t i = 0; i < comp.numel(); ++i)
            if (comp[i] < -1.0 || comp[i] > 1.0) ok = false;
        return std::make_pair(ok, std::string("outputs within [-1, 1]"));
    });

    run.check("networks/dt_scale_invariant_representation", [&] {
        Rng rng(seed + 23);
        networks::Nets nets =
            networks::init_networks(small_net_config(TransformKind::homography), seed + 23);
        TransformOperator op = geometry::build_operator(
            synth::random_bounded_params(rng, TransformKind::homography, 0.25));
        // Scaling the matrix and renormalizing recovers the same free entries.
        Eigen::Matrix3d scaled = 2.5 * op.matrix;
        scaled /= scaled(2, 2);
        double worst = 0.0;
        for (int i = 0; i < 8; ++i)
            worst = std::max(worst, std::abs(scaled(i / 3, i % 3) - op.rep[i]));
        Tensor rep = Tensor::from({1, 8}, std::vector<double>(op.rep.data(), op.rep.data() + 8));
        geometry::OperatorBatch ob =
            geometry::build_operator_batch(TransformKind::homography, Variable::leaf(rep));
        const double s1 = networks::discriminate_transform(nets.d_t, ob).value().item();
        const double s2 = networks::discriminate_transform(nets.d_t, ob).value().item();
        worst = std::max(worst, std::abs(s1 - s2));
        return metric(worst, 1e-12);
    });

    run.check("networks/forward_deterministic_bitwise", [&] {
        Rng rng(seed + 24);
        networks::Nets nets =
            networks::init_networks(small_net_config(TransformKind::homography), seed + 24);
        Tensor x = synth::smooth_random_image(rng, 2, 1, 32, 32, 1.0, 0.9);
        Tensor code = rng.normal_tensor({2, 8});
        Tensor t1 = networks::localize(nets.ln_x, Variable::leaf(x), Variable::leaf(code)).value();
        Tensor t2 = networks::localize(nets.ln_x, Variable::leaf(x), Variable::leaf(code)).value();
        Tensor g1 = networks::translate_appearance(nets.g_x, Variable::leaf(x)).value();
        Tensor g2 = networks::translate_appearance(nets.g_x, Variable::leaf(x)).value();
        const bool ok = max_abs_diff(t1, t2) == 0.0 && max_abs_diff(g1, g2) == 0.0;
        return std::make_pair(ok, std::string("repeated forwards agree bitwise"));
    });
}

void add_pipeline_checks(Runner& run, uint64_t seed) {
    run.check("pipeline/identity_init_cascade", [&] {
        Rng rng(seed + 30);
        double worst = 0.0;
        for (TransformKind kind : kinds) {
            pipeline::Trainer trainer(small_train_config(kind, seed + 30));
            Tensor x = synth::smooth_random_image(rng, 2, 1, 32, 32, 1.0, 0.9);
            Tensor code = rng.normal_tensor({2, 8});
            pipeline::CycleBundle b = trainer.run_cycle(Variable::leaf(x), Variable::leaf(code),
                                                        pipeline::Direction::x2y);
            losses::CycleLossReport r = losses::cycle_loss(b, trainer.config().weights);
            worst = std::max(worst, r.scl);
            worst = std::max(worst, r.rml);
            worst = std::max(worst, max_abs_diff(b.transformed.value(), x));
        }
        return metric(worst, 0.0);
    });

    run.check("pipeline/bundle_inverse_exact", [&] {
        Rng rng(seed + 31);
        pipeline::Trainer trainer(small_train_config(TransformKind::homography, seed + 31));
        // Push the head off the identity so the inverse is non-trivial.
        for (auto& p : trainer.nets().generator_params())
            if (p.name.find("ln_x.fc2.w") != std::string::npos) {
                Tensor& v = p.value.mutable_value();
                Rng wrng(seed + 31);
                for (int64_t i = 0; i < v.numel(); ++i) v[i] = 0.02 * wrng.normal();
            }
        Tensor x = synth::smooth_random_image(rng, 2, 1, 32, 32, 1.0, 0.9);
        Tensor code = rng.normal_tensor({2, 8});
        pipeline::CycleBundle b = trainer.run_cycle(Variable::leaf(x), Variable::leaf(code),
                                                    pipeline::Direction::x2y);
        double worst = 0.0;
        for (int64_t bi = 0; bi < 2; ++bi) {
            Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> h(
                b.h_xy.mat.value().data() + bi * 9);
            Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> hinv(
                b.h_xy_inv.mat.value().data() + bi * 9);
            Eigen::Matrix3d expect = geometry::normalized_inverse(h);
            worst = std::max(worst, (hinv - expect).cwiseAbs().maxCoeff());
            Eigen::Matrix3d prod = h * hinv;
            prod /= prod(2, 2);
            worst = std::max(worst,
                             (prod - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() * 1e-3);
        }
        return metric(worst, 1e-12);
    });

    run.check("pipeline/code_shared_between_passes", [&] {
        Rng rng(seed + 32);
        pipeline::Trainer trainer(small_train_config(TransformKind::affine, seed + 32));
        Tensor x = synth::smooth_random_image(rng, 1, 1, 32, 32, 1.0, 0.9);
        Variable code = Variable::leaf(rng.normal_tensor({1, 8}));
        pipeline::CycleBundle b = trainer.run_cycle(Variable::leaf(x), code,
                                                    pipeline::Direction::x2y);
        const bool ok = b.code.node() == code.node();
        return std::make_pair(ok, std::string("bundle.code is the forward code"));
    });
}

}  // namespace

bool Report::all_pass() const {
    for (const PropertyResult& r : results)
        if (!r.pass) return false;
    return true;
}

std::string Report::to_string() const {
    std::ostringstream os;
    for (const PropertyResult& r : results)
        os << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.detail << ")\n";
    os << (all_pass() ? "invariants: all properties passed" : "invariants: FAILURES present")
       << "\n";
    return os.str();
}

Report run_all(uint64_t seed) {
    Runner run;
    add_geometry_checks(run, seed);
    add_loss_checks(run, seed);
    add_network_checks(run, seed);
    add_pipeline_checks(run, seed);
    return run.report;
}

}  // namespace gadan::invariants
