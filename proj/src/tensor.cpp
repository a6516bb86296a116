#include "crsn/tensor.hpp"

namespace crsn {

namespace {

void check_rank2(const Tensor& t, const char* name) {
    if (t.rank() != 2) throw ShapeError(std::string(name) + ": expected rank-2 tensor");
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul lhs");
    check_rank2(b, "matmul rhs");
    const std::size_t p = a.shape()[0], q = a.shape()[1];
    if (b.shape()[0] != q)
        throw ShapeError("matmul: inner dimensions disagree (" + std::to_string(q) + " vs " +
                         std::to_string(b.shape()[0]) + ")");
    const std::size_t r = b.shape()[1];
    Tensor c({p, r});
    for (std::size_t i = 0; i < p; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t k = 0; k < q; ++k) {
            const double aik = ai[k];
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < r; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul_tn lhs");
    check_rank2(b, "matmul_tn rhs");
    const std::size_t m = a.shape()[0], p = a.shape()[1];
    if (b.shape()[0] != m)
        throw ShapeError("matmul_tn: leading dimensions disagree");
    const std::size_t q = b.shape()[1];
    Tensor c({p, q});
    for (std::size_t k = 0; k < m; ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (std::size_t i = 0; i < p; ++i) {
            const double aki = ak[i];
            double* ci = c.row(i);
            for (std::size_t j = 0; j < q; ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul_nt lhs");
    check_rank2(b, "matmul_nt rhs");
    const std::size_t p = a.shape()[0], m = a.shape()[1];
    if (b.shape()[1] != m)
        throw ShapeError("matmul_nt: trailing dimensions disagree");
    const std::size_t q = b.shape()[0];
    Tensor c({p, q});
    for (std::size_t i = 0; i < p; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t j = 0; j < q; ++j) {
            const double* bj = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k) acc += ai[k] * bj[k];
            ci[j] = acc;
        }
    }
    return c;
}

Tensor vecmat(const Tensor& x, const Tensor& w) {
    if (x.rank() != 1) throw ShapeError("vecmat: lhs must be rank-1");
    check_rank2(w, "vecmat rhs");
    const std::size_t q = w.shape()[0], r = w.shape()[1];
    if (x.size() != q) throw ShapeError("vecmat: inner dimensions disagree");
    Tensor y({r});
    for (std::size_t k = 0; k < q; ++k) {
        const double xk = x[k];
        const double* wk = w.row(k);
        for (std::size_t j = 0; j < r; ++j) y[j] += xk * wk[j];
    }
    return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shapes disagree");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("sub: shapes disagree");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
    return c;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("hadamard: shapes disagree");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
    return c;
}

Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= s;
    return c;
}

void add_inplace(Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("add_inplace: shapes disagree");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void axpy_inplace(Tensor& a, double alpha, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("axpy_inplace: shapes disagree");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += alpha * b[i];
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw ShapeError("dot: sizes disagree");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double sum(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
    return acc;
}

void require_finite(const Tensor& t, const std::string& what) {
    if (!t.all_finite()) throw NumericError(what + ": non-finite value");
}

} // namespace crsn
