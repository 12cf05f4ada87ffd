#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace vlab::beam {

struct NelderMeadOptions {
    std::size_t max_iterations = 2000;
    /// Stop as soon as the best value drops to this level.
    double f_target = 1e-24;
    /// Spread of simplex values and vertex distances treated as collapse.
    double f_tol = 1e-30;
    double x_tol = 1e-14;
    /// Relative size of the initial simplex edges; absolute for zero coordinates.
    double initial_step = 0.1;
    double zero_step = 0.1;
    std::size_t max_restarts = 20;
};

struct NelderMeadResult {
    std::vector<double> x;
    double f = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    std::size_t restarts = 0;
};

/// Deterministic Nelder-Mead minimization with restarts on stagnation.
/// Non-finite objective values are treated as +infinity.
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> x0, const NelderMeadOptions& options = {});

} // namespace vlab::beam
