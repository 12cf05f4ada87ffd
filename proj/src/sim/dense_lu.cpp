#include "vlab/sim/dense_lu.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace vlab::sim {

std::vector<double> DenseMatrix::multiply(std::span<const double> x) const
{
    std::vector<double> y(n_, 0.0);
    for (std::size_t r = 0; r < n_; ++r)
        for (std::size_t c = 0; c < n_; ++c)
            y[r] += (*this)(r, c) * x[c];
    return y;
}

DenseLU::DenseLU(DenseMatrix a, double rel_pivot_tol) : lu_(std::move(a)), perm_(lu_.size())
{
    const std::size_t n = lu_.size();
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});

    std::vector<double> col_scale(n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            col_scale[c] = std::max(col_scale[c], std::abs(lu_(r, c)));

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        double best = std::abs(lu_(k, k));
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::abs(lu_(r, k)) > best) {
                best = std::abs(lu_(r, k));
                p = r;
            }
        if (best == 0.0 || best <= rel_pivot_tol * col_scale[k])
            throw SingularMatrixError(k);
        if (p != k) {
            for (std::size_t c = 0; c < n; ++c)
                std::swap(lu_(k, c), lu_(p, c));
            std::swap(perm_[k], perm_[p]);
        }
        const double pivot = lu_(k, k);
        for (std::size_t r = k + 1; r < n; ++r) {
            const double f = lu_(r, k) / pivot;
            lu_(r, k) = f;
            if (f == 0.0)
                continue;
            for (std::size_t c = k + 1; c < n; ++c)
                lu_(r, c) -= f * lu_(k, c);
        }
    }
}

std::vector<double> DenseLU::solve(std::span<const double> b) const
{
    const std::size_t n = lu_.size();
    if (b.size() != n)
        throw std::invalid_argument("right-hand side length mismatch");
    std::vector<double> x(n);
    for (std::size_t r = 0; r < n; ++r) {
        double s = b[perm_[r]];
        for (std::size_t c = 0; c < r; ++c)
            s -= lu_(r, c) * x[c];
        x[r] = s;
    }
    for (std::size_t r = n; r-- > 0;) {
        double s = x[r];
        for (std::size_t c = r + 1; c < n; ++c)
            s -= lu_(r, c) * x[c];
        x[r] = s / lu_(r, r);
    }
    return x;
}

} // namespace vlab::sim
