#include <doctest.h>

#include "core/config.hpp"
#include "core/error.hpp"

using namespace gadan;
using pipeline::TrainConfig;
using pipeline::parse_config_text;

namespace {

const char* kMinimal = R"(
transform_kind = homography
batch_size = 4
steps = 10
lr_g = 2e-4
lr_d = 2e-4
seed = 7
domain_x_dir = /data/x
domain_y_dir = /data/y
checkpoint_dir = /ckpt
checkpoint_every = 5
)";

}  // namespace

TEST_CASE("minimal config fills the documented defaults") {
    TrainConfig cfg = parse_config_text(kMinimal, "test");
    CHECK(cfg.kind == geometry::TransformKind::homography);
    CHECK(cfg.tps_grid == 4);
    CHECK(cfg.image_size == 256);
    CHECK(cfg.code_dim == 16);
    CHECK(cfg.weights.lambda_acl == 10.0);
    CHECK(cfg.weights.lambda_scl == 1.0);
    CHECK(cfg.weights.lambda_idt == 5.0);
    CHECK(cfg.weights.lambda_adv == 1.0);
    CHECK(cfg.weights.lambda_rml == 1.0);
    CHECK(cfg.batch_size == 4);
    CHECK(cfg.steps == 10);
    CHECK(cfg.seed == 7);
    CHECK(cfg.use_replay_buffer == false);
    CHECK(cfg.resolved_metrics_path() == "/ckpt/metrics.jsonl");
}

TEST_CASE("config rejects bad values with the offending key and line") {
    SUBCASE("negative loss weight") {
        std::string text = std::string(kMinimal) + "lambda_acl = -1\n";
        CHECK_THROWS_WITH_AS(parse_config_text(text, "test"),
                             doctest::Contains("lambda_acl"), ConfigError);
    }
    SUBCASE("unknown transform kind lists the valid values") {
        std::string text = std::string(kMinimal);
        text.replace(text.find("homography"), 10, "perspectiv");
        try {
            parse_config_text(text, "test");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("affine") != std::string::npos);
            CHECK(msg.find("tps") != std::string::npos);
        }
    }
    SUBCASE("unknown keys are hard errors naming key and line") {
        std::string text = std::string(kMinimal) + "mystery_knob = 3\n";
        try {
            parse_config_text(text, "test");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("mystery_knob") != std::string::npos);
            CHECK(msg.find("line") != std::string::npos);
        }
    }
    SUBCASE("missing required key") {
        CHECK_THROWS_WITH_AS(parse_config_text("transform_kind = affine\n", "test"),
                             doctest::Contains("required"), ConfigError);
    }
    SUBCASE("duplicate keys rejected") {
        std::string text = std::string(kMinimal) + "seed = 9\n";
        CHECK_THROWS_AS(parse_config_text(text, "test"), ConfigError);
    }
    SUBCASE("malformed line") {
        std::string text = std::string(kMinimal) + "just words\n";
        CHECK_THROWS_AS(parse_config_text(text, "test"), ConfigError);
    }
    SUBCASE("code_dim must be positive") {
        std::string text = std::string(kMinimal) + "code_dim = 0\n";
        CHECK_THROWS_AS(parse_config_text(text, "test"), ConfigError);
    }
}

TEST_CASE("comments and spacing are tolerated") {
    std::string text = std::string("# leading comment\n") + kMinimal +
                       "image_size = 64   # trailing comment\n\n";
    TrainConfig cfg = parse_config_text(text, "test");
    CHECK(cfg.image_size == 64);
}

TEST_CASE("serialize round-trips through the parser") {
    TrainConfig cfg = parse_config_text(kMinimal, "test");
    cfg.image_size = 64;
    cfg.weights.lambda_idt = 2.5;
    TrainConfig back = parse_config_text(cfg.serialize(), "roundtrip");
    CHECK(back.image_size == 64);
    CHECK(back.weights.lambda_idt == 2.5);
    CHECK(back.serialize() == cfg.serialize());
}
