#pragma once

#include "vlab/sim/ode.hpp"
#include "vlab/sim/time_series.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

// Units throughout: pressure Pa, volume l, speed and conductance l/s,
// gas load Pa*l/s, time s.
namespace vlab::vacuum {

struct Chamber {
    std::string id;
    double volume = 0.0;
    double initial_pressure = 0.0;
    double outgassing_rate = 0.0;

    bool operator==(const Chamber&) const = default;
};

struct Pump {
    std::string id;
    std::string chamber;
    double speed = 0.0;
    double ultimate_pressure = 0.0;

    bool operator==(const Pump&) const = default;
};

struct ConductanceLink {
    std::string id;
    std::string from;
    std::string to;
    double conductance = 0.0;
    bool valve_open = true;

    bool operator==(const ConductanceLink&) const = default;
};

struct VacuumNetwork {
    std::vector<Chamber> chambers;
    std::vector<Pump> pumps;
    std::vector<ConductanceLink> links;

    /// Throws NetworkError on any broken invariant or dangling reference.
    void validate() const;
    std::size_t chamber_index(const std::string& id) const;

    bool operator==(const VacuumNetwork&) const = default;
};

class NetworkError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Conductance of a duct, with an exact representation of "no restriction".
class Conductance {
public:
    static Conductance infinite() { return Conductance(); }
    /// Throws std::invalid_argument unless value > 0 and finite.
    explicit Conductance(double value);

    bool is_infinite() const { return infinite_; }
    double value() const { return value_; }

private:
    Conductance() : value_(0.0), infinite_(true) {}
    double value_;
    bool infinite_;
};

/// Net speed of a pump seen through a series conductance: 1/S_eff = 1/S + 1/C.
double effective_speed(double pump_speed, Conductance conductance);

/// Gas balance per chamber:
///   V_i dp_i/dt = Q_i + sum_links C_ij (p_j - p_i) - sum_pumps S (p_i - p_ult)
/// Closed valves contribute nothing. Writes dp/dt for each chamber.
void pressure_rates(const VacuumNetwork& network, std::span<const double> pressures,
                    std::span<double> rates);

/// The balance equations in ln(p) coordinates, one state per chamber,
/// labelled by chamber id. The state is ln(p / 1 Pa).
sim::OdeSystem build_ode(const VacuumNetwork& network);

/// Pump-down curves: one pressure channel (Pa) per chamber, labelled by id.
sim::TimeSeries pumpdown(const VacuumNetwork& network, double duration, std::size_t n_samples,
                         const sim::SolverSettings& settings = {});

/// Equilibrium pressures where every dp/dt vanishes.
///
/// A connected component (through open valves) without pumping but with gas
/// load has no equilibrium and raises NetworkError. A component without
/// pumping and without gas load keeps its gas, so its equilibrium is the
/// volume-weighted mean of its initial pressures.
std::map<std::string, double> steady_state(const VacuumNetwork& network);

} // namespace vlab::vacuum
