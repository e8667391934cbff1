#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace fsn {

struct GradSuiteOptions {
    std::size_t seeds = 20;
    double tolerance = 1e-5;
    double step = 1e-4;
    // Denominator floor of the relative error. Below it the comparison is
    // effectively absolute (tolerance * floor); this keeps float roundoff of
    // the summed frame loss from dominating near-zero gradient entries.
    double abs_floor = 1e-4;
    std::uint64_t seed = 42;
    // Scales every analytic gradient by (1 + 1e-3) before comparing.
    bool corrupt = false;
};

struct GradSuiteEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t seeds = 0;
    bool passed = false;
};

// Central-difference checks of every layer backward and of the end-to-end
// FSN, ablation and WFSN (GMP and GAP) losses, each over `seeds` random instances.
std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options);

// End-to-end FSN check with a deliberately perturbed backward; `passed` is
// true when the checker flags it, i.e. when the negative control behaves.
GradSuiteEntry run_negative_control(const GradSuiteOptions& options);

}  // namespace fsn
