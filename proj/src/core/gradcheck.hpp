#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gadan::gradcheck {

struct CheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

struct Report {
    std::vector<CheckEntry> entries;
    bool all_pass() const;
    std::string to_string() const;
};

/// Build small random instances (16x16 images, each transform kind, each
/// loss) and compare analytic gradients against central finite differences
/// (h = 1e-4). Component-level tolerance 1e-3; the full chain through the
/// localization weights is checked at 1e-2. Failures are report entries,
/// never exceptions.
Report gradient_check(uint64_t seed);

}  // namespace gadan::gradcheck
