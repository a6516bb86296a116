#include "crsn/fgn.hpp"

#include <cmath>

#include "crsn/error.hpp"

namespace crsn {

FgnSampler::FgnSampler(double hurst, std::size_t horizon) : hurst_(hurst), horizon_(horizon) {
    if (!(hurst > 0.0 && hurst < 1.0)) throw RangeError("fgn: Hurst exponent must lie in (0,1)");
    if (horizon < 1) throw RangeError("fgn: horizon must be >= 1");

    Tensor cov({horizon, horizon});
    for (std::size_t i = 0; i < horizon; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double g = autocov(hurst, i - j);
            cov(i, j) = g;
            cov(j, i) = g;
        }

    // In-place Cholesky; the autocovariance matrix is positive definite for
    // H in (0,1).
    factor_ = Tensor({horizon, horizon});
    for (std::size_t j = 0; j < horizon; ++j) {
        double diag = cov(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= factor_(j, k) * factor_(j, k);
        if (diag <= 0.0) throw NumericError("fgn: covariance factorization lost positivity");
        factor_(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < horizon; ++i) {
            double acc = cov(i, j);
            for (std::size_t k = 0; k < j; ++k) acc -= factor_(i, k) * factor_(j, k);
            factor_(i, j) = acc / factor_(j, j);
        }
    }
}

double FgnSampler::autocov(double hurst, std::size_t k) {
    if (k == 0) return 1.0;
    const double p = 2.0 * hurst;
    const double kk = static_cast<double>(k);
    return 0.5 * (std::pow(kk + 1.0, p) - 2.0 * std::pow(kk, p) + std::pow(kk - 1.0, p));
}

Tensor FgnSampler::sample(Rng& rng, std::size_t count) const {
    if (count > horizon_)
        throw RangeError("fgn: requested " + std::to_string(count) + " samples, horizon is " +
                         std::to_string(horizon_));
    Tensor z({count});
    for (std::size_t i = 0; i < count; ++i) z[i] = rng.normal();
    Tensor out({count});
    for (std::size_t i = 0; i < count; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= i; ++j) acc += factor_(i, j) * z[j];
        out[i] = acc;
    }
    return out;
}

} // namespace crsn
