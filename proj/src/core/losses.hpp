#pragma once

#include "core/geometry.hpp"

namespace gadan::pipeline {
struct CycleBundle;
}

namespace gadan::losses {

struct LossWeights {
    double lambda_acl = 10.0;
    double lambda_scl = 1.0;
    double lambda_idt = 5.0;
    double lambda_adv = 1.0;
    double lambda_rml = 1.0;
    void validate() const;
};

struct CycleLossReport {
    double acl = 0.0;
    double scl = 0.0;
    double rml = 0.0;
    double cycle_total = 0.0;
    double adv_g = 0.0;
    double adv_d = 0.0;
    double idt = 0.0;
};

/// Differentiable per-direction objective pieces.
struct CycleLossVars {
    Variable acl, scl, rml, idt;
    Variable cycle_total;  // lambda_acl*acl + lambda_scl*scl + lambda_rml*rml
};

/// L1 between an input and its geometry-exact reconstruction.
Variable appearance_cycle_loss(const Variable& x, const Variable& x_rec);

/// L1 between two transforms in free-parameter space (8 homography entries,
/// 6 affine, 2K TPS displacements); never an image-space comparison.
Variable spatial_cycle_loss(const geometry::OperatorBatch& h_inv,
                            const geometry::OperatorBatch& h_sy);

/// L1 between the forward validity mask and its round-trip warp.
Variable region_missing_loss(const Variable& m, const Variable& m_roundtrip);

/// Mask-weighted L1 keeping the appearance generator from altering
/// valid-region content.
Variable identity_loss(const Variable& translated, const Variable& transformed,
                       const Variable& m);

enum class AdvSide { generator, discriminator };

/// Adversarial objective over image and transform discriminator outputs
/// (logits). Discriminator side pushes real -> 1 and fake -> 0; the
/// generator side is the non-saturating form pushing fakes -> 1 (real
/// arguments are ignored there). Transform terms are optional: pass empty
/// Variables to score images alone.
Variable adversarial_losses(const Variable& d_out_real, const Variable& d_out_fake,
                            const Variable& dt_out_real, const Variable& dt_out_fake,
                            AdvSide side);

CycleLossVars cycle_loss_vars(const pipeline::CycleBundle& bundle, const LossWeights& w);
CycleLossReport cycle_loss(const pipeline::CycleBundle& bundle, const LossWeights& w);

}  // namespace gadan::losses
