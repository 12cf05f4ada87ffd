#include "vlab/sim/ode.hpp"

#include <algorithm>
#include <cmath>

namespace vlab::sim {

void SolverSettings::validate() const
{
    if (!(rel_tol > 0.0) || !std::isfinite(rel_tol))
        throw std::invalid_argument("rel_tol must be positive");
    if (!(abs_tol > 0.0) || !std::isfinite(abs_tol))
        throw std::invalid_argument("abs_tol must be positive");
    if (!(max_step > 0.0))
        throw std::invalid_argument("max_step must be positive");
    if (max_steps == 0)
        throw std::invalid_argument("max_steps must be positive");
}

namespace {

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
// continuous extension (Hairer, Norsett & Wanner)
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

constexpr double safety = 0.9, fac_min = 0.2, fac_max = 10.0;
// PI step control (Lund stabilization), as in Hairer's dopri5
constexpr double beta = 0.04, expo1 = 0.2 - 0.75 * beta;

class Stepper {
public:
    Stepper(const OdeSystem& sys, const SolverSettings& s, double t0, std::span<const double> y0)
        : sys_(sys), set_(s), n_(sys.dimension), t_(t0), y_(y0.begin(), y0.end()),
          k1_(n_), k2_(n_), k3_(n_), k4_(n_), k5_(n_), k6_(n_), k7_(n_), ytmp_(n_), ynew_(n_),
          cont_(5 * n_)
    {
        eval(t_, y_, k1_);
    }

    double t() const { return t_; }
    double t_prev() const { return t_prev_; }
    const std::vector<double>& y() const { return y_; }

    /// Advances one accepted step without passing t_end.
    void step(double t_end)
    {
        if (h_ == 0.0)
            h_ = initial_step(t_end);
        for (;;) {
            if (++steps_ > set_.max_steps)
                throw SolverError(SolverError::Kind::StepLimit,
                                  "step limit exceeded before reaching the end time "
                                  "(stiff or diverging system)");
            double h = std::min({h_, set_.max_step, t_end - t_});
            const bool last = (h >= t_end - t_);
            if (h <= 16.0 * std::numeric_limits<double>::epsilon() * std::abs(t_))
                throw SolverError(SolverError::Kind::StepUnderflow, "step size underflow");

            const double err = attempt(h);
            if (err <= 1.0) {
                build_dense(h);
                t_prev_ = t_;
                t_ = last ? t_end : t_ + h;
                y_.swap(ynew_);
                k1_.swap(k7_); // FSAL
                const double fac = err == 0.0
                                       ? fac_max
                                       : safety * std::pow(err, -expo1) * std::pow(err_old_, beta);
                h_ = h * std::clamp(fac, fac_min, fac_max);
                err_old_ = std::max(err, 1e-4);
                if (rejected_)
                    h_ = std::min(h_, h);
                rejected_ = false;
                return;
            }
            rejected_ = true;
            h_ = h * std::max(fac_min, safety * std::pow(err, -expo1));
        }
    }

    /// Dense output on the last accepted step, t in [t_prev, t].
    void interpolate(double t, std::span<double> out) const
    {
        const double h = t_ - t_prev_;
        const double theta = (t - t_prev_) / h;
        const double theta1 = 1.0 - theta;
        for (std::size_t i = 0; i < n_; ++i)
            out[i] = cont_[i] +
                     theta * (cont_[n_ + i] +
                              theta1 * (cont_[2 * n_ + i] +
                                        theta * (cont_[3 * n_ + i] + theta1 * cont_[4 * n_ + i])));
    }

private:
    void eval(double t, std::span<const double> y, std::span<double> dydt) const
    {
        sys_.rhs(t, y, dydt);
        for (double v : dydt)
            if (!std::isfinite(v))
                throw SolverError(SolverError::Kind::NonFiniteDerivative,
                                  "right-hand side returned a non-finite derivative at t=" +
                                      std::to_string(t));
    }

    double initial_step(double t_end)
    {
        // Hairer's starting step heuristic
        double d0 = 0, d1n = 0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double sc = set_.abs_tol + set_.rel_tol * std::abs(y_[i]);
            d0 = std::max(d0, std::abs(y_[i]) / sc);
            d1n = std::max(d1n, std::abs(k1_[i]) / sc);
        }
        double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
        h0 = std::min({h0, t_end - t_, set_.max_step});
        for (std::size_t i = 0; i < n_; ++i)
            ytmp_[i] = y_[i] + h0 * k1_[i];
        eval(t_ + h0, ytmp_, k2_);
        double d2 = 0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double sc = set_.abs_tol + set_.rel_tol * std::abs(y_[i]);
            d2 = std::max(d2, std::abs(k2_[i] - k1_[i]) / sc / h0);
        }
        const double big = std::max(d1n, d2);
        const double h1 = big <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / big, 0.2);
        return std::min({100.0 * h0, h1, t_end - t_, set_.max_step});
    }

    double attempt(double h)
    {
        const auto& y = y_;
        for (std::size_t i = 0; i < n_; ++i)
            ytmp_[i] = y[i] + h * a21 * k1_[i];
        eval(t_ + c2 * h, ytmp_, k2_);
        for (std::size_t i = 0; i < n_; ++i)
            ytmp_[i] = y[i] + h * (a31 * k1_[i] + a32 * k2_[i]);
        eval(t_ + c3 * h, ytmp_, k3_);
        for (std::size_t i = 0; i < n_; ++i)
            ytmp_[i] = y[i] + h * (a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]);
        eval(t_ + c4 * h, ytmp_, k4_);
        for (std::size_t i = 0; i < n_; ++i)
            ytmp_[i] = y[i] + h * (a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i]);
        eval(t_ + c5 * h, ytmp_, k5_);
        for (std::size_t i = 0; i < n_; ++i)
            ytmp_[i] = y[i] + h * (a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] +
                                   a65 * k5_[i]);
        eval(t_ + h, ytmp_, k6_);
        for (std::size_t i = 0; i < n_; ++i)
            ynew_[i] = y[i] + h * (a71 * k1_[i] + a73 * k3_[i] + a74 * k4_[i] + a75 * k5_[i] +
                                   a76 * k6_[i]);
        eval(t_ + h, ynew_, k7_);

        double err = 0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double e = h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] +
                                  e6 * k6_[i] + e7 * k7_[i]);
            const double sc =
                set_.abs_tol + set_.rel_tol * std::max(std::abs(y[i]), std::abs(ynew_[i]));
            err = std::max(err, std::abs(e) / sc);
        }
        return err;
    }

    void build_dense(double h)
    {
        for (std::size_t i = 0; i < n_; ++i) {
            const double ydiff = ynew_[i] - y_[i];
            const double bspl = h * k1_[i] - ydiff;
            cont_[i] = y_[i];
            cont_[n_ + i] = ydiff;
            cont_[2 * n_ + i] = bspl;
            cont_[3 * n_ + i] = ydiff - h * k7_[i] - bspl;
            cont_[4 * n_ + i] = h * (d1 * k1_[i] + d3 * k3_[i] + d4 * k4_[i] + d5 * k5_[i] +
                                     d6 * k6_[i] + d7 * k7_[i]);
        }
    }

    const OdeSystem& sys_;
    const SolverSettings& set_;
    std::size_t n_;
    double t_;
    double t_prev_ = 0.0;
    double h_ = 0.0;
    bool rejected_ = false;
    double err_old_ = 1e-4;
    std::size_t steps_ = 0;
    std::vector<double> y_, k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_, ynew_, cont_;
};

void check_inputs(const OdeSystem& system, std::span<const double> initial, double t0, double t1,
                  const SolverSettings& settings)
{
    settings.validate();
    if (!system.rhs)
        throw std::invalid_argument("ODE system has no right-hand side");
    if (system.dimension == 0 || initial.size() != system.dimension)
        throw SolverError(SolverError::Kind::DimensionMismatch,
                          "initial state length " + std::to_string(initial.size()) +
                              " does not match system dimension " +
                              std::to_string(system.dimension));
    if (!system.state_labels.empty() && system.state_labels.size() != system.dimension)
        throw SolverError(SolverError::Kind::DimensionMismatch, "state label count mismatch");
    if (!(t1 > t0) || !std::isfinite(t0) || !std::isfinite(t1))
        throw std::invalid_argument("integration interval must satisfy t1 > t0");
}

} // namespace

TimeSeries integrate_ivp(const OdeSystem& system, std::span<const double> initial, double t0,
                         double t1, std::size_t n_samples, const SolverSettings& settings)
{
    check_inputs(system, initial, t0, t1, settings);
    const auto grid = uniform_grid(t0, t1, n_samples);
    const std::size_t n = system.dimension;

    std::vector<std::vector<double>> columns(n, std::vector<double>(n_samples));
    for (std::size_t i = 0; i < n; ++i)
        columns[i][0] = initial[i];

    Stepper stepper(system, settings, t0, initial);
    std::vector<double> buf(n);
    std::size_t next = 1;
    while (next < n_samples) {
        stepper.step(t1);
        while (next < n_samples && (grid[next] <= stepper.t() || stepper.t() == t1)) {
            if (grid[next] == stepper.t()) {
                for (std::size_t i = 0; i < n; ++i)
                    columns[i][next] = stepper.y()[i];
            } else {
                stepper.interpolate(grid[next], buf);
                for (std::size_t i = 0; i < n; ++i)
                    columns[i][next] = buf[i];
            }
            ++next;
        }
    }

    TimeSeries out(grid);
    for (std::size_t i = 0; i < n; ++i) {
        std::string label =
            system.state_labels.empty() ? "y" + std::to_string(i) : system.state_labels[i];
        std::string unit = i < system.state_units.size() ? system.state_units[i] : "1";
        out.add_channel(std::move(label), std::move(unit), std::move(columns[i]));
    }
    return out;
}

std::vector<double> integrate_to(const OdeSystem& system, std::span<const double> initial,
                                 double t0, double t1, const SolverSettings& settings)
{
    check_inputs(system, initial, t0, t1, settings);
    Stepper stepper(system, settings, t0, initial);
    while (stepper.t() < t1)
        stepper.step(t1);
    return stepper.y();
}

} // namespace vlab::sim
