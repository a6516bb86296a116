#ifndef CRSN_FGN_HPP
#define CRSN_FGN_HPP

#include <cstddef>

#include "crsn/rng.hpp"
#include "crsn/tensor.hpp"

namespace crsn {

// Zero-mean unit-variance fractional Gaussian noise: stationary increments of
// fractional Brownian motion with Hurst exponent H. Sequences are produced by
// applying the lower-triangular Cholesky factor of the autocovariance matrix
// gamma(k) = 0.5*(|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) to iid standard
// normals; exact at the horizons used here.
class FgnSampler {
public:
    FgnSampler(double hurst, std::size_t horizon);

    double hurst() const { return hurst_; }
    std::size_t horizon() const { return horizon_; }

    // Analytic autocovariance at lag k.
    static double autocov(double hurst, std::size_t k);

    // First `count` steps of one sequence; count <= horizon.
    Tensor sample(Rng& rng, std::size_t count) const;

    // Lower-triangular factor L with L L^T equal to the autocovariance matrix.
    const Tensor& factor() const { return factor_; }

private:
    double hurst_;
    std::size_t horizon_;
    Tensor factor_; // [horizon x horizon]
};

} // namespace crsn

#endif
