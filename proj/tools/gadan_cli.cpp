// Command-line front end for the GA-DAN shared library.

#include <CLI11.hpp>
#include <cstdio>
#include <string>

#include "gadan.h"

namespace {

int exit_code_for(int rc) {
    switch (rc) {
        case GADAN_OK: return 0;
        case GADAN_ERR_CONFIG:
        case GADAN_ERR_INVALID_ARG: return 1;
        default: return 2;
    }
}

int finish(int rc) {
    if (rc != GADAN_OK) std::fprintf(stderr, "error: %s\n", gadan_last_error());
    return exit_code_for(rc);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gadan: geometry-aware unpaired image adaptation"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    std::string config_path, resume, checkpoint, input_dir, out_dir;
    unsigned long long seed = 0;
    int num_views = 10;

    CLI::App* train = app.add_subcommand("train", "Train from a key=value config file");
    train->add_option("--config", config_path, "Path to the config file")->required();
    train->add_option("--resume", resume, "Checkpoint to resume from");

    CLI::App* adapt = app.add_subcommand("adapt", "1-to-1 adaptation of a folder");
    adapt->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
    adapt->add_option("--input", input_dir, "Input image folder")->required();
    adapt->add_option("--out", out_dir, "Output folder")->required();
    adapt->add_option("--seed", seed, "Spatial-code seed")->required();

    CLI::App* multi = app.add_subcommand("adapt-multi", "1-to-N adaptation of a folder");
    multi->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
    multi->add_option("--input", input_dir, "Input image folder")->required();
    multi->add_option("--out", out_dir, "Output folder")->required();
    multi->add_option("--num-views", num_views, "Adapted views per image")
        ->default_val(10)
        ->check(CLI::PositiveNumber);
    multi->add_option("--seed", seed, "Spatial-code seed")->required();

    CLI::App* grads = app.add_subcommand("check-grads", "Finite-difference gradient suite");
    grads->add_option("--seed", seed, "Instance seed")->required();

    app.add_subcommand("invariants", "Run the full property suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (train->parsed()) {
        char* final_ckpt = nullptr;
        const int rc =
            gadan_train(config_path.c_str(), resume.empty() ? nullptr : resume.c_str(),
                        &final_ckpt);
        if (rc == GADAN_OK && final_ckpt) {
            std::printf("final checkpoint: %s\n", final_ckpt);
            gadan_string_free(final_ckpt);
        }
        return finish(rc);
    }

    if (adapt->parsed() || multi->parsed()) {
        gadan_session* session = nullptr;
        int rc = gadan_session_open(checkpoint.c_str(), &session);
        if (rc != GADAN_OK) return finish(rc);
        rc = adapt->parsed()
                 ? gadan_adapt_dir(session, input_dir.c_str(), out_dir.c_str(), seed)
                 : gadan_adapt_multi_dir(session, input_dir.c_str(), out_dir.c_str(), num_views,
                                         seed);
        gadan_session_close(session);
        return finish(rc);
    }

    if (grads->parsed()) {
        char* report = nullptr;
        const int rc = gadan_check_grads(seed, &report);
        if (report) {
            std::printf("%s", report);
            gadan_string_free(report);
        }
        return finish(rc);
    }

    // invariants
    char* report = nullptr;
    const int rc = gadan_run_invariants(&report);
    if (report) {
        std::printf("%s", report);
        gadan_string_free(report);
    }
    return finish(rc);
}
