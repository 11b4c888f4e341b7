#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gadan::invariants {

struct PropertyResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct Report {
    std::vector<PropertyResult> results;
    bool all_pass() const;
    std::string to_string() const;
};

/// The bundled property suites of all modules (geometry round trips, loss
/// identities and algebraic properties, network contracts, the
/// identity-initialization cascade). One entry point shared by the CLI and
/// the acceptance suite.
Report run_all(uint64_t seed = 20240915);

}  // namespace gadan::invariants
