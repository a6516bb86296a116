#include "crsn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "crsn/error.hpp"

namespace crsn {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
} // namespace

double sigmoid(double x) {
    if (x >= 0.0) {
        const double z = std::exp(-x);
        return 1.0 / (1.0 + z);
    }
    const double z = std::exp(x);
    return z / (1.0 + z);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    const double phi_big = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double phi_small = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return phi_big + x * phi_small;
}

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

void softmax_inplace(double* x, std::size_t n) {
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        z += x[i];
    }
    const double inv = 1.0 / z;
    for (std::size_t i = 0; i < n; ++i) x[i] *= inv;
}

void softmax_backward_row(const double* s, const double* dy, double* dlogits, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += s[i] * dy[i];
    for (std::size_t i = 0; i < n; ++i) dlogits[i] = s[i] * (dy[i] - acc);
}

Tensor activation(Activation kind, const Tensor& x) {
    Tensor y = x;
    switch (kind) {
        case Activation::Relu:
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(0.0, y[i]);
            return y;
        case Activation::Gelu:
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = gelu(y[i]);
            return y;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = sigmoid(y[i]);
            return y;
        case Activation::Softplus:
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = softplus(y[i]);
            return y;
        case Activation::Softmax: {
            if (y.rank() == 1) {
                softmax_inplace(y.data(), y.size());
            } else {
                for (std::size_t i = 0; i < y.rows(); ++i) softmax_inplace(y.row(i), y.cols());
            }
            return y;
        }
    }
    throw Error("activation: unknown kind");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  LayerNormCache* cache) {
    const std::size_t rows = x.rank() == 1 ? 1 : x.rows();
    const std::size_t d = x.rank() == 1 ? x.size() : x.cols();
    if (d < 2) throw DegenerateInputError("layer_norm: row width must be >= 2");
    if (eps <= 0.0) throw RangeError("layer_norm: eps must be positive");
    if (gain.size() != d || bias.size() != d)
        throw ShapeError("layer_norm: gain/bias width disagrees with rows");
    Tensor y = x;
    Tensor normalized(x.shape());
    Tensor inv_std({rows});
    const double invd = 1.0 / static_cast<double>(d);
    for (std::size_t i = 0; i < rows; ++i) {
        double* yr = y.data() + i * d;
        double* nr = normalized.data() + i * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += yr[j];
        mu *= invd;
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = yr[j] - mu;
            var += c * c;
        }
        var *= invd;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < d; ++j) {
            nr[j] = (yr[j] - mu) * is;
            yr[j] = gain[j] * nr[j] + bias[j];
        }
    }
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

Tensor layer_norm_backward(const Tensor& dy, const Tensor& gain, const LayerNormCache& cache,
                           Tensor& dgain, Tensor& dbias) {
    const std::size_t rows = dy.rank() == 1 ? 1 : dy.rows();
    const std::size_t d = dy.rank() == 1 ? dy.size() : dy.cols();
    Tensor dx(dy.shape());
    const double invd = 1.0 / static_cast<double>(d);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* dyr = dy.data() + i * d;
        const double* nr = cache.normalized.data() + i * d;
        double* dxr = dx.data() + i * d;
        const double is = cache.inv_std[i];
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = dyr[j] * gain[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * nr[j];
            dgain[j] += dyr[j] * nr[j];
            dbias[j] += dyr[j];
        }
        mean_dxhat *= invd;
        mean_dxhat_xhat *= invd;
        for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = dyr[j] * gain[j];
            dxr[j] = is * (dxhat - mean_dxhat - nr[j] * mean_dxhat_xhat);
        }
    }
    return dx;
}

Dense::Dense(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out,
             const Rng& init) {
    w_ = &ps.add(name + ".W", gaussian_init({in, out}, in, init, name + ".W"));
    b_ = &ps.add(name + ".b", Tensor({out}));
}

Tensor Dense::forward(const Tensor& x) {
    in_cache_ = x;
    Tensor y = x.rank() == 1 ? vecmat(x, w_->value) : matmul(x, w_->value);
    if (y.rank() == 1) {
        for (std::size_t j = 0; j < y.size(); ++j) y[j] += b_->value[j];
    } else {
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double* yr = y.row(i);
            for (std::size_t j = 0; j < y.cols(); ++j) yr[j] += b_->value[j];
        }
    }
    return y;
}

Tensor Dense::backward(const Tensor& dy) {
    const std::size_t out = w_->value.shape()[1];
    if (dy.rank() == 1) {
        // dW += x^T dy (outer product), db += dy, dx = dy W^T
        for (std::size_t i = 0; i < in_cache_.size(); ++i) {
            const double xi = in_cache_[i];
            double* wr = w_->grad.row(i);
            for (std::size_t j = 0; j < out; ++j) wr[j] += xi * dy[j];
        }
        for (std::size_t j = 0; j < out; ++j) b_->grad[j] += dy[j];
        Tensor dx({in_cache_.size()});
        for (std::size_t i = 0; i < in_cache_.size(); ++i) {
            const double* wr = w_->value.row(i);
            double acc = 0.0;
            for (std::size_t j = 0; j < out; ++j) acc += wr[j] * dy[j];
            dx[i] = acc;
        }
        return dx;
    }
    add_inplace(w_->grad, matmul_tn(in_cache_, dy));
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        const double* dyr = dy.row(i);
        for (std::size_t j = 0; j < out; ++j) b_->grad[j] += dyr[j];
    }
    return matmul_nt(dy, w_->value);
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, DropoutMask* out_mask) {
    if (rate <= 0.0) {
        if (out_mask) out_mask->mask = Tensor::full(x.shape(), 1.0);
        return x;
    }
    const double keep = 1.0 - rate;
    const double inv_keep = 1.0 / keep;
    Tensor y = x;
    Tensor mask(x.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double m = rng.uniform() < keep ? inv_keep : 0.0;
        mask[i] = m;
        y[i] *= m;
    }
    if (out_mask) out_mask->mask = std::move(mask);
    return y;
}

} // namespace crsn
