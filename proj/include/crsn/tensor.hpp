#ifndef CRSN_TENSOR_HPP
#define CRSN_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "crsn/error.hpp"

namespace crsn {

// Dense row-major tensor of 64-bit reals. Rank 1 and 2 cover everything in
// this codebase. All reductions run in a fixed index order so reruns are
// bitwise reproducible.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count_(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count_(shape_))
            throw ShapeError("tensor: data length does not match shape");
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    std::size_t rows() const { return rank() == 2 ? shape_[0] : (rank() == 1 ? 1 : 0); }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double* row(std::size_t i) { return data_.data() + i * shape_[1]; }
    const double* row(std::size_t i) const { return data_.data() + i * shape_[1]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(double v) {
        for (double& x : data_) x = v;
    }

private:
    static std::size_t count_(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// A [p x q] * B [q x r] -> [p x r]. ikj loop order: contiguous inner walks,
// fixed summation order.
Tensor matmul(const Tensor& a, const Tensor& b);

// A^T * B with A [m x p], B [m x q] -> [p x q].
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// A * B^T with A [p x m], B [q x m] -> [p x q].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// x [q] * W [q x r] -> [r]
Tensor vecmat(const Tensor& x, const Tensor& w);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
void add_inplace(Tensor& a, const Tensor& b);
void axpy_inplace(Tensor& a, double alpha, const Tensor& b); // a += alpha*b

double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);

void require_finite(const Tensor& t, const std::string& what);

} // namespace crsn

#endif
