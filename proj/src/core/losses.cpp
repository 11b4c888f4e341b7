#include "core/losses.hpp"

#include "core/error.hpp"
#include "core/pipeline.hpp"

namespace gadan::losses {

void LossWeights::validate() const {
    for (double v : {lambda_acl, lambda_scl, lambda_idt, lambda_adv, lambda_rml})
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ConfigError("loss weights must be finite and non-negative");
}

Variable appearance_cycle_loss(const Variable& x, const Variable& x_rec) {
    return ops::l1(x, x_rec);
}

Variable spatial_cycle_loss(const geometry::OperatorBatch& h_inv,
                            const geometry::OperatorBatch& h_sy) {
    if (h_inv.kind != h_sy.kind)
        throw KindMismatch(std::string("spatial_cycle_loss: ") + geometry::kind_name(h_inv.kind) +
                           " vs " + geometry::kind_name(h_sy.kind));
    return ops::l1(h_inv.rep, h_sy.rep);
}

Variable region_missing_loss(const Variable& m, const Variable& m_roundtrip) {
    return ops::l1(m, m_roundtrip);
}

Variable identity_loss(const Variable& translated, const Variable& transformed,
                       const Variable& m) {
    return ops::l1(ops::mul_mask(translated, m), ops::mul_mask(transformed, m));
}

Variable adversarial_losses(const Variable& d_out_real, const Variable& d_out_fake,
                            const Variable& dt_out_real, const Variable& dt_out_fake,
                            AdvSide side) {
    Variable total;
    auto accumulate = [&total](Variable term) {
        total = total.defined() ? ops::add(total, term) : term;
    };
    if (side == AdvSide::discriminator) {
        if (d_out_real.defined()) accumulate(ops::bce_with_logits(d_out_real, 1.0));
        if (d_out_fake.defined()) accumulate(ops::bce_with_logits(d_out_fake, 0.0));
        if (dt_out_real.defined()) accumulate(ops::bce_with_logits(dt_out_real, 1.0));
        if (dt_out_fake.defined()) accumulate(ops::bce_with_logits(dt_out_fake, 0.0));
    } else {
        if (d_out_fake.defined()) accumulate(ops::bce_with_logits(d_out_fake, 1.0));
        if (dt_out_fake.defined()) accumulate(ops::bce_with_logits(dt_out_fake, 1.0));
    }
    if (!total.defined()) throw ShapeMismatch("adversarial_losses: no terms given");
    return total;
}

CycleLossVars cycle_loss_vars(const pipeline::CycleBundle& bundle, const LossWeights& w) {
    w.validate();
    CycleLossVars out;
    out.acl = appearance_cycle_loss(bundle.x, bundle.x_rec_inv);
    out.scl = spatial_cycle_loss(bundle.h_xy_inv, bundle.h_sy);
    out.rml = region_missing_loss(bundle.m, bundle.m_roundtrip);
    out.idt = identity_loss(bundle.adapted, bundle.transformed, bundle.m);
    out.cycle_total = ops::add(
        ops::add(ops::scale(out.acl, w.lambda_acl), ops::scale(out.scl, w.lambda_scl)),
        ops::scale(out.rml, w.lambda_rml));
    return out;
}

CycleLossReport cycle_loss(const pipeline::CycleBundle& bundle, const LossWeights& w) {
    CycleLossVars vars = cycle_loss_vars(bundle, w);
    CycleLossReport report;
    report.acl = vars.acl.value().item();
    report.scl = vars.scl.value().item();
    report.rml = vars.rml.value().item();
    report.idt = vars.idt.value().item();
    report.cycle_total = vars.cycle_total.value().item();
    return report;
}

}  // namespace gadan::losses
