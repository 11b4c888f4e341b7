#include "core/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "core/error.hpp"
#include "core/log.hpp"

namespace fs = std::filesystem;

namespace gadan::pipeline {

namespace {

using geometry::OperatorBatch;
using geometry::TransformKind;

void check_finite(std::initializer_list<std::pair<const char*, const Variable*>> items) {
    for (const auto& [name, var] : items) {
        if (var->defined() && !var->value().all_finite())
            throw NonFiniteLoss(std::string("non-finite loss tensor: ") + name);
    }
}

void ensure_resume_compatible(const TrainConfig& cfg, const TrainConfig& saved) {
    auto mismatch = [](const std::string& key) {
        throw ConfigError("resume config differs from checkpoint in key '" + key + "'");
    };
    if (cfg.kind != saved.kind) mismatch("transform_kind");
    if (cfg.tps_grid != saved.tps_grid) mismatch("tps_grid");
    if (cfg.image_size != saved.image_size) mismatch("image_size");
    if (cfg.code_dim != saved.code_dim) mismatch("code_dim");
    if (cfg.channels != saved.channels) mismatch("channels");
    if (cfg.loc_size != saved.loc_size) mismatch("loc_size");
    if (cfg.ngf != saved.ngf) mismatch("ngf");
    if (cfg.ndf != saved.ndf) mismatch("ndf");
    if (cfg.n_res != saved.n_res) mismatch("n_res");
    if (cfg.batch_size != saved.batch_size) mismatch("batch_size");
    if (cfg.lr_g != saved.lr_g) mismatch("lr_g");
    if (cfg.lr_d != saved.lr_d) mismatch("lr_d");
    if (cfg.weights.lambda_acl != saved.weights.lambda_acl) mismatch("lambda_acl");
    if (cfg.weights.lambda_scl != saved.weights.lambda_scl) mismatch("lambda_scl");
    if (cfg.weights.lambda_idt != saved.weights.lambda_idt) mismatch("lambda_idt");
    if (cfg.weights.lambda_adv != saved.weights.lambda_adv) mismatch("lambda_adv");
    if (cfg.weights.lambda_rml != saved.weights.lambda_rml) mismatch("lambda_rml");
    if (cfg.seed != saved.seed) mismatch("seed");
    if (cfg.domain_x_dir != saved.domain_x_dir) mismatch("domain_x_dir");
    if (cfg.domain_y_dir != saved.domain_y_dir) mismatch("domain_y_dir");
    if (cfg.use_replay_buffer != saved.use_replay_buffer) mismatch("use_replay_buffer");
}

void apply_weights(networks::Nets& nets,
                   const std::vector<std::pair<std::string, Tensor>>& weights) {
    networks::ParamList params = nets.all_params();
    if (params.size() != weights.size())
        throw IoError("checkpoint holds " + std::to_string(weights.size()) +
                      " parameter tensors, model expects " + std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, tensor] = weights[i];
        if (name != params[i].name)
            throw IoError("checkpoint parameter '" + name + "' does not match model slot '" +
                          params[i].name + "'");
        if (!tensor.same_shape(params[i].value.value()))
            throw IoError("checkpoint parameter '" + name + "' has shape " + tensor.shape_str() +
                          ", expected " + params[i].value.value().shape_str());
        params[i].value.mutable_value() = tensor.clone();
    }
}

struct ForwardPass {
    OperatorBatch op;
    Variable transformed, mask, completed, adapted;
};

ForwardPass forward_adapt(const networks::LocalizationNet& ln, const networks::GeneratorPair& g,
                          TransformKind kind, const std::shared_ptr<const geometry::TpsBasis>& basis,
                          const Variable& x, const Variable& code) {
    ForwardPass out;
    Variable theta = ln.forward(x, code);
    out.op = geometry::build_operator_batch(kind, theta, basis);
    geometry::WarpVars wv = geometry::warp_batch(x, out.op, -1.0);
    out.transformed = wv.image;
    out.mask = wv.mask;
    out.completed = g.a.forward(out.transformed, out.mask);
    out.adapted = g.b.forward(out.completed);
    return out;
}

}  // namespace

const char* direction_name(Direction d) { return d == Direction::x2y ? "x2y" : "y2x"; }

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(networks::ParamList params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), t_(0), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.push_back(Tensor::zeros(p.value.value().shape()));
        v_.push_back(Tensor::zeros(p.value.value().shape()));
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Variable& p = params_[i].value;
        if (!p.has_grad()) continue;
        const Tensor& g = p.grad();
        Tensor& val = p.mutable_value();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const int64_t n = val.numel();
        for (int64_t j = 0; j < n; ++j) {
            m[j] = b1_ * m[j] + (1.0 - b1_) * g[j];
            v[j] = b2_ * v[j] + (1.0 - b2_) * g[j] * g[j];
            val[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
        }
    }
}

checkpoint::AdamStateBlob Adam::state() const {
    checkpoint::AdamStateBlob blob;
    blob.t = t_;
    blob.m = m_;
    blob.v = v_;
    return blob;
}

void Adam::restore(const checkpoint::AdamStateBlob& blob) {
    if (blob.m.size() != m_.size() || blob.v.size() != v_.size())
        throw IoError("optimizer state does not match parameter count");
    for (size_t i = 0; i < m_.size(); ++i) {
        if (!blob.m[i].same_shape(m_[i]) || !blob.v[i].same_shape(v_[i]))
            throw IoError("optimizer state shape mismatch at slot " + std::to_string(i));
    }
    t_ = blob.t;
    m_ = blob.m;
    v_ = blob.v;
}

// ---------------------------------------------------------------------------
// ImagePool
// ---------------------------------------------------------------------------

Tensor ImagePool::query(const Tensor& batch, Rng& rng) {
    if (capacity_ == 0) return batch;
    const int64_t b = batch.dim(0), item = batch.numel() / b;
    Tensor out = batch.clone();
    for (int64_t i = 0; i < b; ++i) {
        Tensor current({1, batch.dim(1), batch.dim(2), batch.dim(3)});
        std::memcpy(current.data(), batch.data() + i * item, sizeof(double) * item);
        if (images_.size() < capacity_) {
            images_.push_back(current);
            continue;
        }
        if (rng.uniform() > 0.5) {
            const size_t slot = static_cast<size_t>(rng.below(images_.size()));
            std::memcpy(out.data() + i * item, images_[slot].data(), sizeof(double) * item);
            images_[slot] = current;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
    const uint64_t net_seed = rng_.next_u64();
    nets_ = networks::init_networks(cfg_.net_config(), net_seed);
    cursor_x_.rng = rng_.fork();
    cursor_y_.rng = rng_.fork();
    bind_optimizers();
}

Trainer::Trainer(const TrainConfig& cfg, const std::string& resume_checkpoint)
    : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
    checkpoint::CheckpointData data = checkpoint::load(resume_checkpoint);
    TrainConfig saved = parse_config_text(data.config_text, resume_checkpoint + " (embedded)");
    ensure_resume_compatible(cfg_, saved);
    nets_ = networks::init_networks(cfg_.net_config(), 0);
    apply_weights(nets_, data.weights);
    bind_optimizers();
    if (data.has_optimizer) {
        opt_g_.restore(data.opt_g);
        opt_d_.restore(data.opt_d);
    } else {
        GADAN_WARN("checkpoint has no optimizer state; optimizer starts fresh");
    }
    rng_.deserialize(data.rng_state);
    if (!data.cursor_x.empty()) cursor_x_.deserialize(data.cursor_x);
    if (!data.cursor_y.empty()) cursor_y_.deserialize(data.cursor_y);
    step_ = data.step;
}

void Trainer::bind_optimizers() {
    gen_params_ = nets_.generator_params();
    disc_params_ = nets_.discriminator_params();
    opt_g_ = Adam(gen_params_, cfg_.lr_g);
    opt_d_ = Adam(disc_params_, cfg_.lr_d);
}

Tensor Trainer::sample_codes(int64_t batch) {
    return rng_.normal_tensor({batch, cfg_.code_dim});
}

CycleBundle Trainer::run_cycle(const Variable& x, const Variable& code,
                               Direction direction) const {
    const bool fwd_x = direction == Direction::x2y;
    const networks::LocalizationNet& ln_fwd = fwd_x ? nets_.ln_x : nets_.ln_y;
    const networks::LocalizationNet& ln_rec = fwd_x ? nets_.ln_y : nets_.ln_x;
    const networks::GeneratorPair& g_fwd = fwd_x ? nets_.g_x : nets_.g_y;
    const networks::GeneratorPair& g_rec = fwd_x ? nets_.g_y : nets_.g_x;
    std::shared_ptr<const geometry::TpsBasis> basis;
    if (cfg_.kind == TransformKind::tps) basis = geometry::TpsBasis::get(cfg_.tps_grid);

    CycleBundle b;
    b.direction = direction;
    b.x = x;
    b.code = code;

    ForwardPass fp = forward_adapt(ln_fwd, g_fwd, cfg_.kind, basis, x, code);
    b.h_xy = fp.op;
    b.transformed = fp.transformed;
    b.m = fp.mask;
    b.completed = fp.completed;
    b.adapted = fp.adapted;

    // Recovery via the exact inverse; the recovery generator supplies its own
    // completion, guided by the inverse-warp mask.
    b.h_xy_inv = geometry::invert_operator_batch(b.h_xy);
    geometry::WarpVars rec = geometry::warp_batch(b.adapted, b.h_xy_inv, -1.0);
    b.x_rec_inv = g_rec.b.forward(g_rec.a.forward(rec.image, rec.mask));

    // Recovery via the predicted transform; the same spatial code feeds both
    // localization passes so the geometry can be recovered.
    Variable theta_rec = ln_rec.forward(b.adapted, code);
    b.h_sy = geometry::build_operator_batch(cfg_.kind, theta_rec, basis);
    geometry::WarpVars pred = geometry::warp_batch(b.adapted, b.h_sy, -1.0);
    b.x_rec_pred = g_rec.b.forward(g_rec.a.forward(pred.image, pred.mask));

    b.m_roundtrip = geometry::warp_mask_batch(b.m, b.h_xy_inv);
    return b;
}

StepMetrics Trainer::train_step(const Tensor& batch_x, const Tensor& batch_y) {
    using losses::AdvSide;
    Variable x = Variable::leaf(batch_x);
    Variable y = Variable::leaf(batch_y);
    Variable code_x = Variable::leaf(sample_codes(batch_x.dim(0)));
    Variable code_y = Variable::leaf(sample_codes(batch_y.dim(0)));

    CycleBundle bxy = run_cycle(x, code_x, Direction::x2y);
    CycleBundle byx = run_cycle(y, code_y, Direction::y2x);

    losses::CycleLossVars cyc_xy = losses::cycle_loss_vars(bxy, cfg_.weights);
    losses::CycleLossVars cyc_yx = losses::cycle_loss_vars(byx, cfg_.weights);

    Variable dy_fake = nets_.d_y.forward(bxy.adapted);
    Variable dt_fake_xy = nets_.d_t.forward(bxy.h_xy.rep);
    Variable adv_g_xy =
        losses::adversarial_losses({}, dy_fake, {}, dt_fake_xy, AdvSide::generator);
    Variable dx_fake = nets_.d_x.forward(byx.adapted);
    Variable dt_fake_yx = nets_.d_t.forward(byx.h_xy.rep);
    Variable adv_g_yx =
        losses::adversarial_losses({}, dx_fake, {}, dt_fake_yx, AdvSide::generator);

    Variable g_total =
        ops::add(ops::add(cyc_xy.cycle_total, cyc_yx.cycle_total),
                 ops::add(ops::scale(ops::add(adv_g_xy, adv_g_yx), cfg_.weights.lambda_adv),
                          ops::scale(ops::add(cyc_xy.idt, cyc_yx.idt),
                                     cfg_.weights.lambda_idt)));

    check_finite({{"x2y.acl", &cyc_xy.acl},
                  {"x2y.scl", &cyc_xy.scl},
                  {"x2y.rml", &cyc_xy.rml},
                  {"x2y.idt", &cyc_xy.idt},
                  {"x2y.adv_g", &adv_g_xy},
                  {"y2x.acl", &cyc_yx.acl},
                  {"y2x.scl", &cyc_yx.scl},
                  {"y2x.rml", &cyc_yx.rml},
                  {"y2x.idt", &cyc_yx.idt},
                  {"y2x.adv_g", &adv_g_yx},
                  {"g_total", &g_total}});

    opt_g_.zero_grad();
    opt_d_.zero_grad();
    backward(g_total);
    opt_g_.step();

    // Discriminator step on detached fakes, one per generator step.
    Tensor fake_y = bxy.adapted.value();
    Tensor fake_x = byx.adapted.value();
    if (cfg_.use_replay_buffer) {
        fake_y = pool_y_.query(fake_y, rng_);
        fake_x = pool_x_.query(fake_x, rng_);
    }
    Variable dy_real = nets_.d_y.forward(y.detach());
    Variable dy_fake_d = nets_.d_y.forward(Variable::leaf(fake_y));
    // X->Y pairing: the other direction's inverse is real, this direction's
    // forward prediction is fake.
    Variable dt_real_xy = nets_.d_t.forward(byx.h_xy_inv.rep.detach());
    Variable dt_fake_xy_d = nets_.d_t.forward(bxy.h_xy.rep.detach());
    Variable adv_d_xy = losses::adversarial_losses(dy_real, dy_fake_d, dt_real_xy, dt_fake_xy_d,
                                                   AdvSide::discriminator);

    Variable dx_real = nets_.d_x.forward(x.detach());
    Variable dx_fake_d = nets_.d_x.forward(Variable::leaf(fake_x));
    Variable dt_real_yx = nets_.d_t.forward(bxy.h_xy_inv.rep.detach());
    Variable dt_fake_yx_d = nets_.d_t.forward(byx.h_xy.rep.detach());
    Variable adv_d_yx = losses::adversarial_losses(dx_real, dx_fake_d, dt_real_yx, dt_fake_yx_d,
                                                   AdvSide::discriminator);

    Variable d_total = ops::add(adv_d_xy, adv_d_yx);
    check_finite({{"x2y.adv_d", &adv_d_xy}, {"y2x.adv_d", &adv_d_yx}});

    opt_d_.zero_grad();
    opt_g_.zero_grad();
    backward(d_total);
    opt_d_.step();

    StepMetrics metrics;
    metrics.step = step_;
    metrics.x2y.acl = cyc_xy.acl.value().item();
    metrics.x2y.scl = cyc_xy.scl.value().item();
    metrics.x2y.rml = cyc_xy.rml.value().item();
    metrics.x2y.idt = cyc_xy.idt.value().item();
    metrics.x2y.cycle_total = cyc_xy.cycle_total.value().item();
    metrics.x2y.adv_g = adv_g_xy.value().item();
    metrics.x2y.adv_d = adv_d_xy.value().item();
    metrics.y2x.acl = cyc_yx.acl.value().item();
    metrics.y2x.scl = cyc_yx.scl.value().item();
    metrics.y2x.rml = cyc_yx.rml.value().item();
    metrics.y2x.idt = cyc_yx.idt.value().item();
    metrics.y2x.cycle_total = cyc_yx.cycle_total.value().item();
    metrics.y2x.adv_g = adv_g_yx.value().item();
    metrics.y2x.adv_d = adv_d_yx.value().item();
    return metrics;
}

void Trainer::save_checkpoint_file(const std::string& path) const {
    checkpoint::CheckpointData data;
    data.step = step_;
    data.config_text = cfg_.serialize();
    for (const auto& p : nets_.all_params()) data.weights.emplace_back(p.name, p.value.value());
    data.has_optimizer = true;
    data.opt_g = opt_g_.state();
    data.opt_d = opt_d_.state();
    data.rng_state = rng_.serialize();
    data.cursor_x = cursor_x_.serialize();
    data.cursor_y = cursor_y_.serialize();
    checkpoint::save(path, data);
}

std::string Trainer::train(const std::function<void(const StepMetrics&)>& on_step) {
    data_io::DomainDataset ds_x =
        data_io::load_domain(cfg_.domain_x_dir, cfg_.image_size, cfg_.channels);
    data_io::DomainDataset ds_y =
        data_io::load_domain(cfg_.domain_y_dir, cfg_.image_size, cfg_.channels);
    std::error_code ec;
    fs::create_directories(cfg_.checkpoint_dir, ec);
    if (ec) throw IoError("cannot create checkpoint_dir: " + cfg_.checkpoint_dir);

    const std::string metrics_path = cfg_.resolved_metrics_path();
    std::ofstream metrics(metrics_path, step_ > 0 ? std::ios::app : std::ios::trunc);
    if (!metrics) throw IoError("cannot open metrics log: " + metrics_path);
    if (step_ == 0) {
        nlohmann::json header;
        header["type"] = "header";
        nlohmann::json config;
        std::istringstream cfg_text(cfg_.serialize());
        std::string line;
        while (std::getline(cfg_text, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(0, eq - 1);
            config[key] = line.substr(eq + 2);
        }
        header["config"] = config;
        metrics << header.dump() << "\n";
    }

    auto ckpt_path = [this](int64_t step) {
        std::ostringstream os;
        os << cfg_.checkpoint_dir << "/ckpt_" << std::setw(8) << std::setfill('0') << step
           << ".ckpt";
        return os.str();
    };

    std::string last_saved;
    if (cfg_.steps == 0) {
        last_saved = ckpt_path(0);
        save_checkpoint_file(last_saved);
        return last_saved;
    }

    auto emit = [&metrics](const StepMetrics& m) {
        for (Direction d : {Direction::x2y, Direction::y2x}) {
            const losses::CycleLossReport& r = d == Direction::x2y ? m.x2y : m.y2x;
            nlohmann::json rec;
            rec["step"] = m.step;
            rec["direction"] = direction_name(d);
            rec["acl"] = r.acl;
            rec["scl"] = r.scl;
            rec["rml"] = r.rml;
            rec["cycle_total"] = r.cycle_total;
            rec["adv_g"] = r.adv_g;
            rec["adv_d"] = r.adv_d;
            rec["idt"] = r.idt;
            metrics << rec.dump() << "\n";
        }
        metrics.flush();
    };

    while (step_ < cfg_.steps) {
        Tensor bx = data_io::next_batch(ds_x, cfg_.batch_size, cursor_x_);
        Tensor by = data_io::next_batch(ds_y, cfg_.batch_size, cursor_y_);
        bool stepped = false;
        try {
            StepMetrics m = train_step(bx, by);
            stepped = true;
            ++step_;
            emit(m);
            if (on_step) on_step(m);
        } catch (const SingularTransform& e) {
            // Rare early-training pathology; drop the batch and move on.
            if (!stepped) ++step_;
            GADAN_WARN("step " << step_ << ": skipped batch on singular transform: "
                               << e.what());
        }
        if (step_ % cfg_.checkpoint_every == 0) {
            last_saved = ckpt_path(step_);
            save_checkpoint_file(last_saved);
            GADAN_INFO("checkpoint written: " << last_saved);
        }
    }
    if (last_saved.empty() || step_ % cfg_.checkpoint_every != 0) {
        last_saved = ckpt_path(step_);
        save_checkpoint_file(last_saved);
    }
    return last_saved;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

LoadedModel load_model(const std::string& checkpoint_path) {
    checkpoint::CheckpointData data = checkpoint::load(checkpoint_path);
    LoadedModel model;
    model.config = parse_config_text(data.config_text, checkpoint_path + " (embedded)");
    model.nets = networks::init_networks(model.config.net_config(), 0);
    apply_weights(model.nets, data.weights);
    return model;
}

Tensor adapt(const LoadedModel& model, const Tensor& image, const Tensor& code) {
    std::shared_ptr<const geometry::TpsBasis> basis;
    if (model.config.kind == TransformKind::tps)
        basis = geometry::TpsBasis::get(model.config.tps_grid);
    Variable x = Variable::leaf(image);
    Variable c = Variable::leaf(code);
    ForwardPass fp =
        forward_adapt(model.nets.ln_x, model.nets.g_x, model.config.kind, basis, x, c);
    return fp.adapted.value();
}

std::vector<Tensor> adapt_multi(const LoadedModel& model, const Tensor& image, int n,
                                uint64_t seed) {
    if (n < 1) throw ConfigError("adapt_multi: n must be >= 1");
    if (image.rank() != 4 || image.dim(0) != 1)
        throw ShapeMismatch("adapt_multi: image must be 1 x C x H x W");
    Rng rng(seed);
    const int64_t c = image.dim(1), h = image.dim(2), w = image.dim(3);
    Tensor batch({n, c, h, w});
    for (int i = 0; i < n; ++i)
        std::memcpy(batch.data() + static_cast<int64_t>(i) * c * h * w, image.data(),
                    sizeof(double) * c * h * w);
    Tensor codes = rng.normal_tensor({n, model.config.code_dim});
    Tensor adapted = adapt(model, batch, codes);
    std::vector<Tensor> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        Tensor view({1, c, h, w});
        std::memcpy(view.data(), adapted.data() + static_cast<int64_t>(i) * c * h * w,
                    sizeof(double) * c * h * w);
        out.push_back(view);
    }
    return out;
}

}  // namespace gadan::pipeline
