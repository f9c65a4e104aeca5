#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace soda2 {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

// Runs every registered operator check plus the composed encoder +
// classification + alignment loss, each over `seeds` random instances, and
// reports the worst relative error per case. Operator cases use small random
// shapes; the composition uses a reduced architecture on a 2+2-sample batch
// with the per-modality bandwidths frozen at their base-point values (the
// analytic gradient treats them as constants).
std::vector<GradCheckCase> run_grad_checks(int seeds, double op_tol = 1e-6,
                                           double comp_tol = 1e-5,
                                           std::uint64_t base_seed = 12345);

// Names of the registered checks, in report order.
std::vector<std::string> grad_check_names();

}  // namespace soda2
