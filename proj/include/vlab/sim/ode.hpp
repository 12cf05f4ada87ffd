#pragma once

#include "vlab/sim/time_series.hpp"

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vlab::sim {

/// Right-hand side dy/dt = f(t, y). Writes dimension entries into dydt.
using RhsFunction = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;

struct OdeSystem {
    std::size_t dimension = 0;
    RhsFunction rhs;
    std::vector<std::string> state_labels;
    /// Optional; channels default to the dimensionless unit "1".
    std::vector<std::string> state_units;
};

struct SolverSettings {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double max_step = std::numeric_limits<double>::infinity();
    std::size_t max_steps = 10'000'000;

    /// Throws std::invalid_argument when a field is out of its domain.
    void validate() const;
};

class SolverError : public std::runtime_error {
public:
    enum class Kind { StepLimit, NonFiniteDerivative, StepUnderflow, DimensionMismatch };

    SolverError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Integrates an initial-value problem with the Dormand-Prince 5(4) pair and
/// samples the solution on a uniform grid of n_samples points over [t0, t1]
/// through the pair's continuous extension.
///
/// Errors are controlled per component against abs_tol + rel_tol*|y| in the
/// max norm.
TimeSeries integrate_ivp(const OdeSystem& system, std::span<const double> initial, double t0,
                         double t1, std::size_t n_samples, const SolverSettings& settings = {});

/// Final state only; same stepping as integrate_ivp.
std::vector<double> integrate_to(const OdeSystem& system, std::span<const double> initial,
                                 double t0, double t1, const SolverSettings& settings = {});

} // namespace vlab::sim
