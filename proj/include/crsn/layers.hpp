#ifndef CRSN_LAYERS_HPP
#define CRSN_LAYERS_HPP

#include <cstddef>

#include "crsn/optim.hpp"
#include "crsn/rng.hpp"
#include "crsn/tensor.hpp"

namespace crsn {

enum class Activation { Relu, Gelu, Sigmoid, Softplus, Softmax };

double sigmoid(double x);
double gelu(double x);
double gelu_grad(double x);
double softplus(double x);

// Elementwise for Relu/Gelu/Sigmoid/Softplus; row-wise along the last axis
// for Softmax. Total on all finite inputs.
Tensor activation(Activation kind, const Tensor& x);

// Softmax over a contiguous range, shifted by the max for stability.
void softmax_inplace(double* x, std::size_t n);

// dL/dlogits from dL/dsoftmax for one row: s .* (dy - <s, dy>).
void softmax_backward_row(const double* s, const double* dy, double* dlogits, std::size_t n);

struct LayerNormCache {
    Tensor normalized; // (x - mu) / sqrt(var + eps), per row
    Tensor inv_std;    // one per row
};

// Per-row zero-mean unit-variance normalization followed by the affine
// transform gain .* xhat + bias. Rows of width < 2 are degenerate.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  LayerNormCache* cache = nullptr);

// Backward of layer_norm; accumulates into dgain/dbias, returns dx.
Tensor layer_norm_backward(const Tensor& dy, const Tensor& gain, const LayerNormCache& cache,
                           Tensor& dgain, Tensor& dbias);

// Fully connected y = x W + b for row-major batches of row vectors.
class Dense {
public:
    Dense() = default;
    Dense(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, const Rng& init);

    Tensor forward(const Tensor& x);             // caches x
    Tensor backward(const Tensor& dy);           // accumulates dW, db; returns dx
    const Param& weight() const { return *w_; }

private:
    Param* w_ = nullptr;
    Param* b_ = nullptr;
    Tensor in_cache_;
};

// Inverted dropout: scales kept units by 1/(1-rate) so eval needs no rescale.
struct DropoutMask {
    Tensor mask; // 0 or 1/(1-rate)
};

Tensor dropout(const Tensor& x, double rate, Rng& rng, DropoutMask* out_mask);

} // namespace crsn

#endif
