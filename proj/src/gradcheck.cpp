#include "crsn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "crsn/error.hpp"

namespace crsn {

GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::vector<GradCheckTarget>& targets, double h_scale,
                           std::optional<std::size_t> coords_per_tensor, Rng* probe_rng) {
    GradCheckReport report;
    for (const auto& t : targets) {
        Tensor& theta = *t.value;
        if (!t.analytic->same_shape(theta))
            throw ShapeError("grad_check: analytic gradient shape mismatch for " + t.name);

        std::vector<std::size_t> coords;
        if (coords_per_tensor && *coords_per_tensor < theta.size()) {
            for (std::size_t k = 0; k < *coords_per_tensor; ++k)
                coords.push_back(probe_rng->next_u64() % theta.size());
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        } else {
            coords.resize(theta.size());
            for (std::size_t k = 0; k < theta.size(); ++k) coords[k] = k;
        }

        for (std::size_t k : coords) {
            const double orig = theta[k];
            const double h = h_scale * std::max(1.0, std::fabs(orig));
            theta[k] = orig + h;
            const double lp = loss();
            theta[k] = orig - h;
            const double lm = loss();
            theta[k] = orig;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw NumericError("grad_check: non-finite loss probing " + t.name);
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = (*t.analytic)[k];
            const double rel =
                std::fabs(analytic - numeric) / std::max(std::fabs(analytic) + std::fabs(numeric), 0.1);
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_name = t.name;
                report.worst_index = k;
            }
        }
    }
    return report;
}

} // namespace crsn
