#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace vlab::sim {

/// Row-major square matrix.
class DenseMatrix {
public:
    DenseMatrix() = default;
    explicit DenseMatrix(std::size_t n) : n_(n), a_(n * n, 0.0) {}

    std::size_t size() const { return n_; }
    double& operator()(std::size_t r, std::size_t c) { return a_[r * n_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a_[r * n_ + c]; }

    std::vector<double> multiply(std::span<const double> x) const;

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t n_ = 0;
    std::vector<double> a_;
};

class SingularMatrixError : public std::runtime_error {
public:
    explicit SingularMatrixError(std::size_t column)
        : std::runtime_error("singular matrix (no usable pivot in column " +
                             std::to_string(column) + ")"),
          column_(column)
    {
    }
    std::size_t column() const { return column_; }

private:
    std::size_t column_;
};

/// LU factorization with partial pivoting.
///
/// A pivot whose magnitude falls below rel_pivot_tol times the largest entry
/// of the original column is treated as zero.
class DenseLU {
public:
    explicit DenseLU(DenseMatrix a, double rel_pivot_tol = 1e-13);

    std::vector<double> solve(std::span<const double> b) const;

private:
    DenseMatrix lu_;
    std::vector<std::size_t> perm_;
};

} // namespace vlab::sim
