#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <string>

#include "gadan.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("gadan_capi_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// Fixture images written with OpenCV directly; the library under test is
// only reached through the C interface.
void write_images(const fs::path& dir, int count, int size, int offset) {
    fs::create_directories(dir);
    for (int i = 0; i < count; ++i) {
        cv::Mat img(size, size, CV_8UC1);
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c)
                img.at<uint8_t>(r, c) = static_cast<uint8_t>((r * 7 + c * 13 + i + offset) % 256);
        cv::imwrite((dir / ("img" + std::to_string(i) + ".png")).string(), img);
    }
}

std::string write_config(const fs::path& dir, int steps) {
    const std::string path = (dir / "train.cfg").string();
    std::ofstream os(path);
    os << "transform_kind = homography\n"
       << "image_size = 32\n"
       << "loc_size = 32\n"
       << "channels = 1\n"
       << "code_dim = 8\n"
       << "ngf = 4\n"
       << "ndf = 4\n"
       << "n_res = 1\n"
       << "batch_size = 2\n"
       << "steps = " << steps << "\n"
       << "lr_g = 2e-4\n"
       << "lr_d = 2e-4\n"
       << "seed = 5\n"
       << "domain_x_dir = " << (dir / "x").string() << "\n"
       << "domain_y_dir = " << (dir / "y").string() << "\n"
       << "checkpoint_dir = " << (dir / "ckpt").string() << "\n"
       << "checkpoint_every = 2\n";
    return path;
}

}  // namespace

TEST_CASE("version and error strings") {
    CHECK(std::string(gadan_version()).find('.') != std::string::npos);
    CHECK(gadan_last_error() != nullptr);
}

TEST_CASE("argument validation returns GADAN_ERR_INVALID_ARG") {
    CHECK(gadan_train(nullptr, nullptr, nullptr) == GADAN_ERR_INVALID_ARG);
    gadan_session* session = nullptr;
    CHECK(gadan_session_open(nullptr, &session) == GADAN_ERR_INVALID_ARG);
    CHECK(gadan_adapt_dir(nullptr, "a", "b", 0) == GADAN_ERR_INVALID_ARG);
}

TEST_CASE("missing files map to meaningful error codes") {
    gadan_session* session = nullptr;
    CHECK(gadan_session_open("/nonexistent/path.ckpt", &session) == GADAN_ERR_IO);
    CHECK(session == nullptr);
    CHECK(std::string(gadan_last_error()).size() > 0);
    CHECK(gadan_train("/nonexistent/config.cfg", nullptr, nullptr) == GADAN_ERR_CONFIG);
}

TEST_CASE("train, open, adapt through the C interface") {
    TempDir dir;
    write_images(dir.path / "x", 4, 32, 0);
    write_images(dir.path / "y", 4, 32, 100);
    const std::string cfg = write_config(dir.path, 2);

    char* final_ckpt = nullptr;
    REQUIRE(gadan_train(cfg.c_str(), nullptr, &final_ckpt) == GADAN_OK);
    REQUIRE(final_ckpt != nullptr);
    const std::string ckpt_path = final_ckpt;
    gadan_string_free(final_ckpt);
    CHECK(fs::exists(ckpt_path));

    gadan_session* session = nullptr;
    REQUIRE(gadan_session_open(ckpt_path.c_str(), &session) == GADAN_OK);
    REQUIRE(session != nullptr);

    const fs::path out1 = dir.path / "out1";
    CHECK(gadan_adapt_dir(session, (dir.path / "x").string().c_str(), out1.string().c_str(),
                          9) == GADAN_OK);
    int count = 0;
    for (const auto& e : fs::directory_iterator(out1)) {
        CHECK(e.path().extension() == ".png");
        ++count;
    }
    CHECK(count == 4);

    const fs::path out2 = dir.path / "out2";
    CHECK(gadan_adapt_multi_dir(session, (dir.path / "x").string().c_str(),
                                out2.string().c_str(), 3, 9) == GADAN_OK);
    count = 0;
    bool naming_ok = true;
    for (const auto& e : fs::directory_iterator(out2)) {
        if (e.path().filename().string().find("_view") == std::string::npos) naming_ok = false;
        ++count;
    }
    CHECK(count == 4 * 3);
    CHECK(naming_ok);
    CHECK(fs::exists(out2 / "img0_view0.png"));
    CHECK(fs::exists(out2 / "img0_view2.png"));

    CHECK(gadan_adapt_multi_dir(session, (dir.path / "x").string().c_str(),
                                out2.string().c_str(), 0, 9) == GADAN_ERR_INVALID_ARG);
    gadan_session_close(session);
}

TEST_CASE("resume through the C interface continues from the checkpoint") {
    TempDir dir;
    write_images(dir.path / "x", 4, 32, 0);
    write_images(dir.path / "y", 4, 32, 100);
    const std::string cfg2 = write_config(dir.path, 2);
    char* mid_ckpt = nullptr;
    REQUIRE(gadan_train(cfg2.c_str(), nullptr, &mid_ckpt) == GADAN_OK);
    const std::string mid = mid_ckpt;
    gadan_string_free(mid_ckpt);

    // Same config with more steps, resumed from the step-2 checkpoint.
    fs::remove(dir.path / "train.cfg");
    const std::string cfg4 = write_config(dir.path, 4);
    char* final_ckpt = nullptr;
    REQUIRE(gadan_train(cfg4.c_str(), mid.c_str(), &final_ckpt) == GADAN_OK);
    CHECK(std::string(final_ckpt).find("00000004") != std::string::npos);
    gadan_string_free(final_ckpt);
}

TEST_CASE("invariants run through the C interface") {
    char* report = nullptr;
    CHECK(gadan_run_invariants(&report) == GADAN_OK);
    REQUIRE(report != nullptr);
    CHECK(std::string(report).find("PASS") != std::string::npos);
    gadan_string_free(report);
}

TEST_CASE("gradient check runs through the C interface") {
    char* report = nullptr;
    CHECK(gadan_check_grads(7, &report) == GADAN_OK);
    REQUIRE(report != nullptr);
    const std::string text = report;
    gadan_string_free(report);
    CHECK(text.find("warp/theta") != std::string::npos);
    CHECK(text.find("FAIL") == std::string::npos);
}
