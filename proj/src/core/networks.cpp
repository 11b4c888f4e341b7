#include "core/networks.hpp"

#include <cmath>

#include "core/error.hpp"

namespace gadan::networks {

namespace {

constexpr double kInitSigma = 0.02;

// Table-style localization trunk channels.
constexpr int kLocChannels[5] = {16, 32, 64, 128, 128};

double he_sigma(int fan_in) { return std::sqrt(2.0 / fan_in); }

Tensor identity_rows(geometry::TransformKind kind, int tps_grid, int64_t batch) {
    const geometry::TransformParams id = geometry::identity_params(kind, tps_grid);
    const int n = static_cast<int>(id.theta.size());
    Tensor t({batch, n});
    for (int64_t b = 0; b < batch; ++b)
        for (int i = 0; i < n; ++i) t[b * n + i] = id.theta[i];
    return t;
}

}  // namespace

void NetConfig::validate() const {
    if (code_dim < 1) throw ConfigError("code_dim must be >= 1");
    if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
    if (image_size < 8 || image_size % 4 != 0)
        throw ConfigError("image_size must be >= 8 and divisible by 4");
    if (loc_size < 32 || loc_size % 32 != 0)
        throw ConfigError("loc_size must be a positive multiple of 32");
    if (ngf < 1 || ndf < 1) throw ConfigError("ngf/ndf must be >= 1");
    if (tps_grid < 2) throw ConfigError("tps_grid must be >= 2");
    if (theta_bound <= 0.0) throw ConfigError("theta_bound must be positive");
}

Conv2d Conv2d::create(Rng& rng, int cin, int cout, int k, int stride, int pad, double sigma) {
    Conv2d c;
    c.w = Variable::leaf(rng.normal_tensor({cout, cin, k, k}, sigma), true);
    c.b = Variable::leaf(Tensor::zeros({cout}), true);
    c.stride = stride;
    c.pad = pad;
    return c;
}

void Conv2d::collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

Linear Linear::create(Rng& rng, int in, int out, double sigma) {
    Linear l;
    l.w = Variable::leaf(rng.normal_tensor({out, in}, sigma), true);
    l.b = Variable::leaf(Tensor::zeros({out}), true);
    return l;
}

Linear Linear::zeros(int in, int out) {
    Linear l;
    l.w = Variable::leaf(Tensor::zeros({out, in}), true);
    l.b = Variable::leaf(Tensor::zeros({out}), true);
    return l;
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

InstanceNorm InstanceNorm::create(int channels) {
    InstanceNorm n;
    n.gamma = Variable::leaf(Tensor::ones({channels}), true);
    n.beta = Variable::leaf(Tensor::zeros({channels}), true);
    return n;
}

void InstanceNorm::collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
}

// ---------------------------------------------------------------------------
// LocalizationNet
// ---------------------------------------------------------------------------

LocalizationNet::LocalizationNet(Rng& rng, const NetConfig& cfg)
    : kind_(cfg.kind),
      tps_grid_(cfg.tps_grid),
      loc_size_(cfg.loc_size),
      code_dim_(cfg.code_dim),
      channels_(cfg.channels),
      theta_bound_(cfg.theta_bound) {
    int cin = cfg.channels;
    for (int i = 0; i < 5; ++i) {
        // The trunk has no normalization layers, so fan-in scaled init keeps
        // block activations from collapsing with depth.
        blocks_.push_back(
            Conv2d::create(rng, cin, kLocChannels[i], 3, 1, 1, he_sigma(cin * 9)));
        cin = kLocChannels[i];
    }
    const int spatial = cfg.loc_size / 32;
    const int flat = kLocChannels[4] * spatial * spatial;
    fc1_ = Linear::create(rng, flat + cfg.code_dim, 512, he_sigma(flat + cfg.code_dim));
    // Per-group scaling: the code block contributes as much initial variance
    // as the whole image-feature block, otherwise a low-dimensional code is
    // drowned out and the spatial mapping collapses to a single mode.
    {
        Tensor& w = fc1_.w.mutable_value();
        const double img_scale = std::sqrt(1.0 / flat) / he_sigma(flat + cfg.code_dim);
        const double code_scale = std::sqrt(1.0 / cfg.code_dim) / he_sigma(flat + cfg.code_dim);
        const int64_t in = flat + cfg.code_dim;
        for (int64_t r = 0; r < 512; ++r) {
            for (int64_t c = 0; c < flat; ++c) w[r * in + c] *= img_scale;
            for (int64_t c = flat; c < in; ++c) w[r * in + c] *= code_scale;
        }
    }
    fc2_ = Linear::zeros(512, cfg.theta_dim());
}

Variable LocalizationNet::forward(const Variable& image, const Variable& code) const {
    const auto& is = image.value().shape();
    if (is.size() != 4 || is[1] != channels_)
        throw ShapeMismatch("localize: image " + image.value().shape_str());
    const auto& cs = code.value().shape();
    if (cs.size() != 2 || cs[1] != code_dim_ || cs[0] != is[0])
        throw ShapeMismatch("localize: code " + code.value().shape_str());
    Variable x = ops::bilinear_resize(image, loc_size_, loc_size_);
    for (const Conv2d& block : blocks_) x = ops::maxpool2x2(ops::relu(block(x)));
    const int64_t b = is[0];
    x = ops::reshape(x, {b, x.value().numel() / b});
    x = ops::concat_dim1(x, code);
    x = ops::relu(fc1_(x));
    x = fc2_(x);
    // Bounded deviation around the identity parameters.
    x = ops::scale(ops::tanh(x), theta_bound_);
    Variable id = Variable::leaf(identity_rows(kind_, tps_grid_, b));
    return ops::add(x, id);
}

void LocalizationNet::collect(ParamList& out, const std::string& prefix) const {
    for (size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].collect(out, prefix + ".block" + std::to_string(i + 1));
    fc1_.collect(out, prefix + ".fc1");
    fc2_.collect(out, prefix + ".fc2");
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

Variable ResBlock::operator()(const Variable& x) const {
    Variable y = n1(c1(x));
    y = ops::relu(y);
    y = n2(c2(y));
    return ops::add(x, y);
}

void ResBlock::collect(ParamList& out, const std::string& prefix) const {
    c1.collect(out, prefix + ".c1");
    n1.collect(out, prefix + ".n1");
    c2.collect(out, prefix + ".c2");
    n2.collect(out, prefix + ".n2");
}

EncoderDecoder::EncoderDecoder(Rng& rng, int in_channels, int out_channels, int ngf, int n_res) {
    stem_ = Conv2d::create(rng, in_channels, ngf, 7, 1, 3, kInitSigma);
    n_stem_ = InstanceNorm::create(ngf);
    down1_ = Conv2d::create(rng, ngf, 2 * ngf, 3, 2, 1, kInitSigma);
    n_d1_ = InstanceNorm::create(2 * ngf);
    down2_ = Conv2d::create(rng, 2 * ngf, 4 * ngf, 3, 2, 1, kInitSigma);
    n_d2_ = InstanceNorm::create(4 * ngf);
    for (int i = 0; i < n_res; ++i) {
        ResBlock r;
        r.c1 = Conv2d::create(rng, 4 * ngf, 4 * ngf, 3, 1, 1, kInitSigma);
        r.n1 = InstanceNorm::create(4 * ngf);
        r.c2 = Conv2d::create(rng, 4 * ngf, 4 * ngf, 3, 1, 1, kInitSigma);
        r.n2 = InstanceNorm::create(4 * ngf);
        res_.push_back(std::move(r));
    }
    up1_ = Conv2d::create(rng, 4 * ngf, 2 * ngf, 3, 1, 1, kInitSigma);
    n_u1_ = InstanceNorm::create(2 * ngf);
    up2_ = Conv2d::create(rng, 2 * ngf, ngf, 3, 1, 1, kInitSigma);
    n_u2_ = InstanceNorm::create(ngf);
    head_ = Conv2d::create(rng, ngf, out_channels, 7, 1, 3, kInitSigma);
}

Variable EncoderDecoder::forward(const Variable& x) const {
    Variable y = ops::relu(n_stem_(stem_(x)));
    y = ops::relu(n_d1_(down1_(y)));
    y = ops::relu(n_d2_(down2_(y)));
    for (const ResBlock& r : res_) y = r(y);
    y = ops::relu(n_u1_(up1_(ops::upsample_nearest2(y))));
    y = ops::relu(n_u2_(up2_(ops::upsample_nearest2(y))));
    return ops::tanh(head_(y));
}

void EncoderDecoder::collect(ParamList& out, const std::string& prefix) const {
    stem_.collect(out, prefix + ".stem");
    n_stem_.collect(out, prefix + ".n_stem");
    down1_.collect(out, prefix + ".down1");
    n_d1_.collect(out, prefix + ".n_d1");
    down2_.collect(out, prefix + ".down2");
    n_d2_.collect(out, prefix + ".n_d2");
    for (size_t i = 0; i < res_.size(); ++i)
        res_[i].collect(out, prefix + ".res" + std::to_string(i));
    up1_.collect(out, prefix + ".up1");
    n_u1_.collect(out, prefix + ".n_u1");
    up2_.collect(out, prefix + ".up2");
    n_u2_.collect(out, prefix + ".n_u2");
    head_.collect(out, prefix + ".head");
}

CompletionNet::CompletionNet(Rng& rng, const NetConfig& cfg)
    : net_(rng, cfg.channels + 1, cfg.channels, cfg.ngf, cfg.resolved_n_res()) {}

Variable CompletionNet::forward(const Variable& image, const Variable& mask) const {
    const auto& is = image.value().shape();
    const auto& ms = mask.value().shape();
    if (is.size() != 4 || ms.size() != 4 || ms[1] != 1 || is[0] != ms[0] || is[2] != ms[2] ||
        is[3] != ms[3])
        throw ShapeMismatch("complete_background: image " + image.value().shape_str() +
                            " mask " + mask.value().shape_str());
    Variable gen = net_.forward(ops::concat_dim1(image, mask));
    // out = image * m + gen * (1 - m); valid pixels pass through exactly.
    return ops::add(ops::mul_mask(image, mask), ops::sub(gen, ops::mul_mask(gen, mask)));
}

void CompletionNet::collect(ParamList& out, const std::string& prefix) const {
    net_.collect(out, prefix);
}

TranslationNet::TranslationNet(Rng& rng, const NetConfig& cfg)
    : net_(rng, cfg.channels, cfg.channels, cfg.ngf, cfg.resolved_n_res()) {}

Variable TranslationNet::forward(const Variable& image) const {
    if (image.value().rank() != 4)
        throw ShapeMismatch("translate_appearance: image " + image.value().shape_str());
    return net_.forward(image);
}

void TranslationNet::collect(ParamList& out, const std::string& prefix) const {
    net_.collect(out, prefix);
}

void GeneratorPair::collect(ParamList& out, const std::string& prefix) const {
    a.collect(out, prefix + ".a");
    b.collect(out, prefix + ".b");
}

// ---------------------------------------------------------------------------
// Discriminators
// ---------------------------------------------------------------------------

PatchDiscriminator::PatchDiscriminator(Rng& rng, const NetConfig& cfg) {
    const int ndf = cfg.ndf;
    c1_ = Conv2d::create(rng, cfg.channels, ndf, 4, 2, 1, kInitSigma);
    c2_ = Conv2d::create(rng, ndf, 2 * ndf, 4, 2, 1, kInitSigma);
    n2_ = InstanceNorm::create(2 * ndf);
    c3_ = Conv2d::create(rng, 2 * ndf, 4 * ndf, 4, 2, 1, kInitSigma);
    n3_ = InstanceNorm::create(4 * ndf);
    c4_ = Conv2d::create(rng, 4 * ndf, 8 * ndf, 4, 1, 1, kInitSigma);
    n4_ = InstanceNorm::create(8 * ndf);
    c5_ = Conv2d::create(rng, 8 * ndf, 1, 4, 1, 1, kInitSigma);
}

Variable PatchDiscriminator::forward(const Variable& image) const {
    if (image.value().rank() != 4)
        throw ShapeMismatch("discriminate_image: " + image.value().shape_str());
    Variable y = ops::leaky_relu(c1_(image), 0.2);
    y = ops::leaky_relu(n2_(c2_(y)), 0.2);
    y = ops::leaky_relu(n3_(c3_(y)), 0.2);
    y = ops::leaky_relu(n4_(c4_(y)), 0.2);
    return c5_(y);
}

void PatchDiscriminator::collect(ParamList& out, const std::string& prefix) const {
    c1_.collect(out, prefix + ".c1");
    c2_.collect(out, prefix + ".c2");
    n2_.collect(out, prefix + ".n2");
    c3_.collect(out, prefix + ".c3");
    n3_.collect(out, prefix + ".n3");
    c4_.collect(out, prefix + ".c4");
    n4_.collect(out, prefix + ".n4");
    c5_.collect(out, prefix + ".c5");
}

TransformDiscriminator::TransformDiscriminator(Rng& rng, const NetConfig& cfg) {
    const int n = cfg.theta_dim();
    l1_ = Linear::create(rng, n, 64, he_sigma(n));
    l2_ = Linear::create(rng, 64, 64, he_sigma(64));
    l3_ = Linear::create(rng, 64, 1, he_sigma(64));
}

Variable TransformDiscriminator::forward(const Variable& rep) const {
    if (rep.value().rank() != 2)
        throw ShapeMismatch("discriminate_transform: rep " + rep.value().shape_str());
    Variable y = ops::leaky_relu(l1_(rep), 0.2);
    y = ops::leaky_relu(l2_(y), 0.2);
    return l3_(y);
}

void TransformDiscriminator::collect(ParamList& out, const std::string& prefix) const {
    l1_.collect(out, prefix + ".l1");
    l2_.collect(out, prefix + ".l2");
    l3_.collect(out, prefix + ".l3");
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

ParamList Nets::generator_params() const {
    ParamList out;
    ln_x.collect(out, "ln_x");
    ln_y.collect(out, "ln_y");
    g_x.collect(out, "g_x");
    g_y.collect(out, "g_y");
    return out;
}

ParamList Nets::discriminator_params() const {
    ParamList out;
    d_x.collect(out, "d_x");
    d_y.collect(out, "d_y");
    d_t.collect(out, "d_t");
    return out;
}

ParamList Nets::all_params() const {
    ParamList out = generator_params();
    ParamList d = discriminator_params();
    out.insert(out.end(), d.begin(), d.end());
    return out;
}

Nets init_networks(const NetConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Nets nets;
    nets.config = cfg;
    nets.ln_x = LocalizationNet(rng, cfg);
    nets.ln_y = LocalizationNet(rng, cfg);
    nets.g_x.a = CompletionNet(rng, cfg);
    nets.g_x.b = TranslationNet(rng, cfg);
    nets.g_y.a = CompletionNet(rng, cfg);
    nets.g_y.b = TranslationNet(rng, cfg);
    nets.d_x = PatchDiscriminator(rng, cfg);
    nets.d_y = PatchDiscriminator(rng, cfg);
    nets.d_t = TransformDiscriminator(rng, cfg);
    return nets;
}

Variable localize(const LocalizationNet& net, const Variable& image, const Variable& code) {
    return net.forward(image, code);
}

Variable complete_background(const GeneratorPair& gen, const Variable& image,
                             const Variable& mask) {
    return gen.a.forward(image, mask);
}

Variable translate_appearance(const GeneratorPair& gen, const Variable& image) {
    return gen.b.forward(image);
}

Variable discriminate_image(const PatchDiscriminator& d, const Variable& image) {
    return d.forward(image);
}

Variable discriminate_transform(const TransformDiscriminator& d,
                                const geometry::OperatorBatch& op) {
    return d.forward(op.rep);
}

}  // namespace gadan::networks
