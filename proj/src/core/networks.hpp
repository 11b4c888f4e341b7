#pragma once

#include <string>
#include <vector>

#include "core/geometry.hpp"
#include "core/rng.hpp"

namespace gadan::networks {

struct NamedParam {
    std::string name;
    Variable value;
};
using ParamList = std::vector<NamedParam>;

struct NetConfig {
    geometry::TransformKind kind = geometry::TransformKind::homography;
    int tps_grid = geometry::kDefaultTpsGrid;
    int code_dim = 16;
    int channels = 3;
    int image_size = 256;
    int loc_size = 256;  // localization input; images are resized for localization only
    int ngf = 64;
    int ndf = 64;
    int n_res = -1;  // -1: 9 at image_size >= 256, else 6
    double theta_bound = 0.35;

    int resolved_n_res() const { return n_res >= 0 ? n_res : (image_size >= 256 ? 9 : 6); }
    int theta_dim() const { return geometry::param_count(kind, tps_grid); }
    void validate() const;
};

// ---- building blocks ----

struct Conv2d {
    Variable w, b;
    int stride = 1, pad = 0;
    static Conv2d create(Rng& rng, int cin, int cout, int k, int stride, int pad, double sigma);
    Variable operator()(const Variable& x) const { return ops::conv2d(x, w, b, stride, pad); }
    void collect(ParamList& out, const std::string& prefix) const;
};

struct Linear {
    Variable w, b;
    static Linear create(Rng& rng, int in, int out, double sigma);
    static Linear zeros(int in, int out);
    Variable operator()(const Variable& x) const { return ops::linear(x, w, b); }
    void collect(ParamList& out, const std::string& prefix) const;
};

struct InstanceNorm {
    Variable gamma, beta;
    static InstanceNorm create(int channels);
    Variable operator()(const Variable& x) const { return ops::instance_norm(x, gamma, beta); }
    void collect(ParamList& out, const std::string& prefix) const;
};

// ---- networks ----

/// Conv trunk (five 3x3-conv + 2x2-maxpool blocks, 16/32/64/128/128 channels)
/// followed by FC1(512) and an N-way head. The spatial code joins the
/// flattened trunk features before FC1. The head is zero-initialized and its
/// bounded output is added to the identity parameters, so a fresh net
/// predicts the identity transform for every input and code.
class LocalizationNet {
public:
    LocalizationNet() = default;
    LocalizationNet(Rng& rng, const NetConfig& cfg);
    Variable forward(const Variable& image, const Variable& code) const;
    void collect(ParamList& out, const std::string& prefix) const;

private:
    std::vector<Conv2d> blocks_;
    Linear fc1_, fc2_;
    geometry::TransformKind kind_ = geometry::TransformKind::homography;
    int tps_grid_ = geometry::kDefaultTpsGrid;
    int loc_size_ = 0, code_dim_ = 0, channels_ = 0;
    double theta_bound_ = 0.35;
};

struct ResBlock {
    Conv2d c1, c2;
    InstanceNorm n1, n2;
    Variable operator()(const Variable& x) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

/// Residual encoder-decoder: c7s1 stem, two stride-2 downs, n_res residual
/// blocks, two nearest-upsample+conv ups, c7s1 head with tanh.
class EncoderDecoder {
public:
    EncoderDecoder() = default;
    EncoderDecoder(Rng& rng, int in_channels, int out_channels, int ngf, int n_res);
    Variable forward(const Variable& x) const;
    void collect(ParamList& out, const std::string& prefix) const;

private:
    Conv2d stem_, down1_, down2_, up1_, up2_, head_;
    InstanceNorm n_stem_, n_d1_, n_d2_, n_u1_, n_u2_;
    std::vector<ResBlock> res_;
};

/// Background completion net. Output pixels with mask == 1 pass through
/// unchanged by construction: out = image * m + g(image, m) * (1 - m).
class CompletionNet {
public:
    CompletionNet() = default;
    CompletionNet(Rng& rng, const NetConfig& cfg);
    Variable forward(const Variable& image, const Variable& mask) const;
    void collect(ParamList& out, const std::string& prefix) const;

private:
    EncoderDecoder net_;
};

class TranslationNet {
public:
    TranslationNet() = default;
    TranslationNet(Rng& rng, const NetConfig& cfg);
    Variable forward(const Variable& image) const;
    void collect(ParamList& out, const std::string& prefix) const;

private:
    EncoderDecoder net_;
};

struct GeneratorPair {
    CompletionNet a;  // background completion
    TranslationNet b;  // appearance translation
    void collect(ParamList& out, const std::string& prefix) const;
};

/// 70x70-style patch classifier; emits a spatial logit map.
class PatchDiscriminator {
public:
    PatchDiscriminator() = default;
    PatchDiscriminator(Rng& rng, const NetConfig& cfg);
    Variable forward(const Variable& image) const;
    void collect(ParamList& out, const std::string& prefix) const;

private:
    Conv2d c1_, c2_, c3_, c4_, c5_;
    InstanceNorm n2_, n3_, n4_;
};

/// Fully connected classifier over the normalized free-parameter
/// representation of a transform; one logit per batch element.
class TransformDiscriminator {
public:
    TransformDiscriminator() = default;
    TransformDiscriminator(Rng& rng, const NetConfig& cfg);
    Variable forward(const Variable& rep) const;
    void collect(ParamList& out, const std::string& prefix) const;

private:
    Linear l1_, l2_, l3_;
};

struct Nets {
    NetConfig config;
    LocalizationNet ln_x, ln_y;
    GeneratorPair g_x, g_y;
    PatchDiscriminator d_x, d_y;
    TransformDiscriminator d_t;

    ParamList generator_params() const;      // spatial modules + generators
    ParamList discriminator_params() const;  // D_X, D_Y, D_T
    ParamList all_params() const;
};

Nets init_networks(const NetConfig& cfg, uint64_t seed);

// Spec-level entry points.
Variable localize(const LocalizationNet& net, const Variable& image, const Variable& code);
Variable complete_background(const GeneratorPair& gen, const Variable& image,
                             const Variable& mask);
Variable translate_appearance(const GeneratorPair& gen, const Variable& image);
Variable discriminate_image(const PatchDiscriminator& d, const Variable& image);
Variable discriminate_transform(const TransformDiscriminator& d,
                                const geometry::OperatorBatch& op);

}  // namespace gadan::networks
