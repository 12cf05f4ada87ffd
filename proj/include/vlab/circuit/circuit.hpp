#pragma once

#include "vlab/sim/dense_lu.hpp"
#include "vlab/sim/time_series.hpp"

#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace vlab::circuit {

enum class ElementKind { Resistor, Capacitor, Inductor, VoltageSource, Switch };

/// Two-terminal element between nodes `a` and `b`.
///
/// Currents are positive when flowing from `a` to `b` through the element.
/// A voltage source holds V(a) - V(b) = value. Switches are ideal: absent
/// before `closed_at`, zero ohms from then on.
struct Element {
    std::string id;
    ElementKind kind = ElementKind::Resistor;
    std::string a;
    std::string b;
    double value = 0.0;   // ohm, farad, henry or volt
    double initial = 0.0; // capacitor voltage or inductor current at t = 0
    double closed_at = std::numeric_limits<double>::infinity();

    static Element resistor(std::string id, std::string a, std::string b, double ohms);
    static Element capacitor(std::string id, std::string a, std::string b, double farads,
                             double initial_voltage = 0.0);
    static Element inductor(std::string id, std::string a, std::string b, double henries,
                            double initial_current = 0.0);
    static Element voltage_source(std::string id, std::string plus, std::string minus, double volts);
    static Element switch_(std::string id, std::string a, std::string b, double closed_at);

    bool operator==(const Element&) const = default;
};

struct Circuit {
    std::string ground = "0";
    std::vector<Element> elements;

    /// Non-ground nodes in order of first appearance.
    std::vector<std::string> nodes() const;
    const Element& element(const std::string& id) const;

    bool operator==(const Circuit&) const = default;
};

class CircuitError : public std::runtime_error {
public:
    enum class Kind { Invalid, Floating, Singular };

    CircuitError(Kind kind, const std::string& what, std::vector<std::string> nodes = {})
        : std::runtime_error(what), kind_(kind), nodes_(std::move(nodes))
    {
    }
    Kind kind() const { return kind_; }
    /// Offending nodes for Floating errors.
    const std::vector<std::string>& nodes() const { return nodes_; }

private:
    Kind kind_;
    std::vector<std::string> nodes_;
};

/// Checks element values, ids, terminals, and that every node reaches ground
/// through the element graph with all switches closed.
void validate(const Circuit& circuit);

/// Stamped DC system: unknowns are the node voltages followed by the branch
/// currents of voltage-defined elements (sources, inductors, closed switches).
/// Capacitors are open and inductors are shorts.
struct MnaSystem {
    std::string ground;
    std::vector<std::string> nodes;
    std::vector<std::string> branches;
    sim::DenseMatrix matrix;
    std::vector<double> rhs;
};

struct DcSolution {
    std::map<std::string, double> node_voltages;  // ground included at 0
    std::map<std::string, double> branch_currents;
};

/// Switch states are keyed by element id; a switch missing from the map is
/// closed iff its closed_at <= 0. Throws CircuitError(Floating) with the
/// offending nodes when part of the circuit has no DC path to ground.
MnaSystem assemble_mna(const Circuit& circuit, const std::map<std::string, bool>& switch_states = {});

DcSolution solve_dc(const MnaSystem& system);

struct TransientOptions {
    /// Adds I(id) for every element, not only sources, inductors and switches.
    bool all_currents = false;
    /// Overrides the internal step; 0 selects duration / (50 * n_samples).
    double internal_step = 0.0;
};

/// Trapezoidal companion-model transient with a fixed internal step,
/// re-assembled at every switch event.
///
/// Channels: V(node) in V for each non-ground node, then I(id) in A for
/// voltage sources, inductors and switches.
sim::TimeSeries transient(const Circuit& circuit, double duration, std::size_t n_samples,
                          const TransientOptions& options = {});

/// Ladder pulse-forming network: n sections of series L and shunt C, all
/// capacitors charged to `charge_voltage`, discharged through switch SW
/// (closing at t = 0) into load resistor RLOAD.
///
/// Nodes: c1..cn (capacitor tops), out (after the last inductor), load.
Circuit pfn_template(int n_sections, double inductance_per_section,
                     double capacitance_per_section, double load_resistance,
                     double charge_voltage = 1000.0);

} // namespace vlab::circuit
