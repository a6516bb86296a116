#ifndef CRSN_GRADCHECK_HPP
#define CRSN_GRADCHECK_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "crsn/rng.hpp"
#include "crsn/tensor.hpp"

namespace crsn {

// One tensor to check: the live storage that the loss closure reads, plus the
// analytic gradient previously computed for it.
struct GradCheckTarget {
    std::string name;
    Tensor* value;          // mutated in place during probing, restored after
    const Tensor* analytic; // same shape as *value
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_name;
    std::size_t worst_index = 0;
};

// Central finite differences, h = h_scale * max(1, |theta|) per coordinate.
// Relative discrepancy uses max(|a| + |n|, 0.1) in the denominator so small
// but real gradient bugs still register while dead coordinates stay quiet.
// When coords_per_tensor is set, only that many coordinates per tensor are
// probed, chosen from probe_rng (for large parameter blocks).
GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::vector<GradCheckTarget>& targets,
                           double h_scale = 1e-5,
                           std::optional<std::size_t> coords_per_tensor = std::nullopt,
                           Rng* probe_rng = nullptr);

} // namespace crsn

#endif
