#include "gadan.h"

#include <cstring>
#include <filesystem>
#include <string>

#include "core/data_io.hpp"
#include "core/error.hpp"
#include "core/gradcheck.hpp"
#include "core/invariants.hpp"
#include "core/log.hpp"
#include "core/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

thread_local std::string g_last_error;

int code_of(gadan::ErrorCode c) {
    using gadan::ErrorCode;
    switch (c) {
        case ErrorCode::ok: return GADAN_OK;
        case ErrorCode::config: return GADAN_ERR_CONFIG;
        case ErrorCode::io: return GADAN_ERR_IO;
        case ErrorCode::empty_domain: return GADAN_ERR_EMPTY_DOMAIN;
        case ErrorCode::shape_mismatch: return GADAN_ERR_SHAPE;
        case ErrorCode::kind_mismatch: return GADAN_ERR_KIND;
        case ErrorCode::singular_transform: return GADAN_ERR_SINGULAR;
        case ErrorCode::non_finite_loss: return GADAN_ERR_NONFINITE;
        case ErrorCode::version_mismatch: return GADAN_ERR_VERSION;
        case ErrorCode::invalid_argument: return GADAN_ERR_INVALID_ARG;
        case ErrorCode::check_failed: return GADAN_ERR_CHECK_FAILED;
        case ErrorCode::internal: return GADAN_ERR_INTERNAL;
    }
    return GADAN_ERR_INTERNAL;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return GADAN_OK;
    } catch (const gadan::GadanError& e) {
        g_last_error = e.what();
        return code_of(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return GADAN_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return GADAN_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

int require(bool cond, const char* msg) {
    if (cond) return GADAN_OK;
    g_last_error = msg;
    return GADAN_ERR_INVALID_ARG;
}

}  // namespace

struct gadan_session {
    gadan::pipeline::LoadedModel model;
};

extern "C" {

const char* gadan_version(void) { return "1.0.0"; }

const char* gadan_last_error(void) { return g_last_error.c_str(); }

void gadan_string_free(char* s) { std::free(s); }

int gadan_train(const char* config_path, const char* resume_ckpt, char** final_ckpt_out) {
    if (int rc = require(config_path != nullptr, "config_path is NULL")) return rc;
    return guarded([&] {
        gadan::pipeline::TrainConfig cfg = gadan::pipeline::parse_config(config_path);
        std::string final_path;
        if (resume_ckpt) {
            gadan::pipeline::Trainer trainer(cfg, resume_ckpt);
            final_path = trainer.train();
        } else {
            gadan::pipeline::Trainer trainer(cfg);
            final_path = trainer.train();
        }
        if (final_ckpt_out) *final_ckpt_out = dup_string(final_path);
    });
}

int gadan_session_open(const char* checkpoint_path, gadan_session** out) {
    if (int rc = require(checkpoint_path && out, "NULL argument")) return rc;
    *out = nullptr;
    return guarded([&] {
        auto* session = new gadan_session{gadan::pipeline::load_model(checkpoint_path)};
        *out = session;
    });
}

void gadan_session_close(gadan_session* session) { delete session; }

int gadan_adapt_dir(gadan_session* session, const char* input_dir, const char* output_dir,
                    unsigned long long seed) {
    if (int rc = require(session && input_dir && output_dir, "NULL argument")) return rc;
    return guarded([&] {
        const auto& cfg = session->model.config;
        gadan::data_io::DomainDataset ds =
            gadan::data_io::load_domain(input_dir, cfg.image_size, cfg.channels);
        std::error_code ec;
        fs::create_directories(output_dir, ec);
        if (ec) throw gadan::IoError(std::string("cannot create output dir: ") + output_dir);
        gadan::Rng rng(seed);
        for (const std::string& path : ds.files) {
            gadan::Tensor image =
                gadan::data_io::decode_image(path, cfg.image_size, cfg.channels);
            gadan::Tensor code = rng.normal_tensor({1, cfg.code_dim});
            gadan::Tensor adapted = gadan::pipeline::adapt(session->model, image, code);
            const std::string stem = fs::path(path).stem().string();
            gadan::data_io::encode_output(adapted,
                                          (fs::path(output_dir) / (stem + ".png")).string());
        }
    });
}

int gadan_adapt_multi_dir(gadan_session* session, const char* input_dir, const char* output_dir,
                          int num_views, unsigned long long seed) {
    if (int rc = require(session && input_dir && output_dir, "NULL argument")) return rc;
    if (int rc = require(num_views >= 1, "num_views must be >= 1")) return rc;
    return guarded([&] {
        const auto& cfg = session->model.config;
        gadan::data_io::DomainDataset ds =
            gadan::data_io::load_domain(input_dir, cfg.image_size, cfg.channels);
        std::error_code ec;
        fs::create_directories(output_dir, ec);
        if (ec) throw gadan::IoError(std::string("cannot create output dir: ") + output_dir);
        gadan::Rng rng(seed);
        for (const std::string& path : ds.files) {
            gadan::Tensor image =
                gadan::data_io::decode_image(path, cfg.image_size, cfg.channels);
            std::vector<gadan::Tensor> views = gadan::pipeline::adapt_multi(
                session->model, image, num_views, rng.next_u64());
            const std::string stem = fs::path(path).stem().string();
            for (size_t k = 0; k < views.size(); ++k) {
                const std::string name = stem + "_view" + std::to_string(k) + ".png";
                gadan::data_io::encode_output(views[k],
                                              (fs::path(output_dir) / name).string());
            }
        }
    });
}

int gadan_check_grads(unsigned long long seed, char** report_out) {
    bool ok = false;
    const int rc = guarded([&] {
        gadan::gradcheck::Report report = gadan::gradcheck::gradient_check(seed);
        ok = report.all_pass();
        if (report_out) *report_out = dup_string(report.to_string());
    });
    if (rc != GADAN_OK) return rc;
    if (!ok) {
        g_last_error = "gradient check reported failures";
        return GADAN_ERR_CHECK_FAILED;
    }
    return GADAN_OK;
}

int gadan_run_invariants(char** report_out) {
    bool ok = false;
    const int rc = guarded([&] {
        gadan::invariants::Report report = gadan::invariants::run_all();
        ok = report.all_pass();
        if (report_out) *report_out = dup_string(report.to_string());
    });
    if (rc != GADAN_OK) return rc;
    if (!ok) {
        g_last_error = "invariant suite reported failures";
        return GADAN_ERR_CHECK_FAILED;
    }
    return GADAN_OK;
}

}  // extern "C"
