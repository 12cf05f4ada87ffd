#include "vlab/circuit/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_map>

namespace vlab::circuit {

Element Element::resistor(std::string id, std::string a, std::string b, double ohms)
{
    return {std::move(id), ElementKind::Resistor, std::move(a), std::move(b), ohms};
}

Element Element::capacitor(std::string id, std::string a, std::string b, double farads,
                           double initial_voltage)
{
    return {std::move(id), ElementKind::Capacitor, std::move(a), std::move(b), farads, initial_voltage};
}

Element Element::inductor(std::string id, std::string a, std::string b, double henries,
                          double initial_current)
{
    return {std::move(id), ElementKind::Inductor, std::move(a), std::move(b), henries, initial_current};
}

Element Element::voltage_source(std::string id, std::string plus, std::string minus, double volts)
{
    return {std::move(id), ElementKind::VoltageSource, std::move(plus), std::move(minus), volts};
}

Element Element::switch_(std::string id, std::string a, std::string b, double closed_at)
{
    Element e{std::move(id), ElementKind::Switch, std::move(a), std::move(b)};
    e.closed_at = closed_at;
    return e;
}

std::vector<std::string> Circuit::nodes() const
{
    std::vector<std::string> out;
    std::set<std::string> seen{ground};
    for (const auto& e : elements)
        for (const auto* n : {&e.a, &e.b})
            if (seen.insert(*n).second)
                out.push_back(*n);
    return out;
}

const Element& Circuit::element(const std::string& id) const
{
    for (const auto& e : elements)
        if (e.id == id)
            return e;
    throw CircuitError(CircuitError::Kind::Invalid, "unknown element '" + id + "'");
}

namespace {

using Kind = ElementKind;

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
    std::size_t find(std::size_t x)
    {
        while (parent_[x] != x)
            x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    void join(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

private:
    std::vector<std::size_t> parent_;
};

// Node indexing: ground is -1, others 0..n-1 in order of appearance.
struct NodeMap {
    std::vector<std::string> names;
    std::unordered_map<std::string, int> index;

    explicit NodeMap(const Circuit& c) : names(c.nodes())
    {
        index[c.ground] = -1;
        for (std::size_t i = 0; i < names.size(); ++i)
            index[names[i]] = static_cast<int>(i);
    }
    int operator()(const std::string& n) const { return index.at(n); }
};

// Throws Floating when some nodes cannot reach ground through `conducts`.
template <class Pred>
void check_connected(const Circuit& c, const NodeMap& nm, Pred conducts, const std::string& context)
{
    const std::size_t n = nm.names.size();
    UnionFind uf(n + 1); // slot n is ground
    auto slot = [&](const std::string& node) {
        const int i = nm(node);
        return i < 0 ? n : static_cast<std::size_t>(i);
    };
    for (const auto& e : c.elements)
        if (conducts(e))
            uf.join(slot(e.a), slot(e.b));
    std::vector<std::string> floating;
    for (std::size_t i = 0; i < n; ++i)
        if (uf.find(i) != uf.find(n))
            floating.push_back(nm.names[i]);
    if (!floating.empty()) {
        std::string list;
        for (const auto& f : floating)
            list += (list.empty() ? "" : ", ") + f;
        throw CircuitError(CircuitError::Kind::Floating,
                           "floating subcircuit " + context + ": nodes " + list, floating);
    }
}

bool switch_closed(const Element& e, const std::map<std::string, bool>& states)
{
    auto it = states.find(e.id);
    return it != states.end() ? it->second : e.closed_at <= 0.0;
}

// Stamping helpers on a dense system with ground index -1.
struct Stamper {
    sim::DenseMatrix& m;
    std::vector<double>& b;

    void conductance(int i, int j, double g)
    {
        if (i >= 0) m(i, i) += g;
        if (j >= 0) m(j, j) += g;
        if (i >= 0 && j >= 0) {
            m(i, j) -= g;
            m(j, i) -= g;
        }
    }
    // current `value` injected into node i and drawn from node j
    void injection(int i, int j, double value)
    {
        if (i >= 0) b[i] += value;
        if (j >= 0) b[j] -= value;
    }
    // branch row k: V(i) - V(j) - r * I_k = rhs, with I_k leaving i and entering j
    void branch(int i, int j, std::size_t k, double r, double rhs)
    {
        if (i >= 0) {
            m(i, k) += 1.0;
            m(k, i) += 1.0;
        }
        if (j >= 0) {
            m(j, k) -= 1.0;
            m(k, j) -= 1.0;
        }
        m(k, k) -= r;
        b[k] += rhs;
    }
};

} // namespace

void validate(const Circuit& c)
{
    using K = CircuitError::Kind;
    if (c.elements.empty())
        throw CircuitError(K::Invalid, "circuit has no elements");
    std::set<std::string> ids;
    bool has_ground = false;
    for (const auto& e : c.elements) {
        if (e.id.empty() || !ids.insert(e.id).second)
            throw CircuitError(K::Invalid, "element ids must be unique and non-empty ('" + e.id + "')");
        if (e.a == e.b)
            throw CircuitError(K::Invalid, "element '" + e.id + "' terminals must be distinct");
        if (e.a.empty() || e.b.empty())
            throw CircuitError(K::Invalid, "element '" + e.id + "' has an empty terminal");
        has_ground = has_ground || e.a == c.ground || e.b == c.ground;
        switch (e.kind) {
        case Kind::Resistor:
        case Kind::Capacitor:
        case Kind::Inductor:
            if (!(e.value > 0.0) || !std::isfinite(e.value))
                throw CircuitError(K::Invalid, "element '" + e.id + "' value must be > 0");
            if (!std::isfinite(e.initial))
                throw CircuitError(K::Invalid, "element '" + e.id + "' initial state must be finite");
            break;
        case Kind::VoltageSource:
            if (!std::isfinite(e.value))
                throw CircuitError(K::Invalid, "source '" + e.id + "' value must be finite");
            break;
        case Kind::Switch:
            if (std::isnan(e.closed_at))
                throw CircuitError(K::Invalid, "switch '" + e.id + "' closing time is NaN");
            break;
        }
    }
    if (!has_ground)
        throw CircuitError(K::Invalid, "ground node '" + c.ground + "' is not connected");
    const NodeMap nm(c);
    check_connected(c, nm, [](const Element&) { return true; }, "with all switches closed");
}

MnaSystem assemble_mna(const Circuit& circuit, const std::map<std::string, bool>& switch_states)
{
    validate(circuit);
    const NodeMap nm(circuit);
    check_connected(
        circuit, nm,
        [&](const Element& e) {
            if (e.kind == Kind::Capacitor)
                return false;
            if (e.kind == Kind::Switch)
                return switch_closed(e, switch_states);
            return true;
        },
        "at DC");

    MnaSystem sys;
    sys.ground = circuit.ground;
    sys.nodes = nm.names;
    for (const auto& e : circuit.elements)
        if (e.kind == Kind::VoltageSource || e.kind == Kind::Inductor ||
            (e.kind == Kind::Switch && switch_closed(e, switch_states)))
            sys.branches.push_back(e.id);

    const std::size_t n = sys.nodes.size() + sys.branches.size();
    sys.matrix = sim::DenseMatrix(n);
    sys.rhs.assign(n, 0.0);
    Stamper st{sys.matrix, sys.rhs};
    std::size_t k = sys.nodes.size();
    for (const auto& e : circuit.elements) {
        const int i = nm(e.a), j = nm(e.b);
        switch (e.kind) {
        case Kind::Resistor:
            st.conductance(i, j, 1.0 / e.value);
            break;
        case Kind::Capacitor:
            break;
        case Kind::Inductor:
            st.branch(i, j, k++, 0.0, 0.0);
            break;
        case Kind::VoltageSource:
            st.branch(i, j, k++, 0.0, e.value);
            break;
        case Kind::Switch:
            if (switch_closed(e, switch_states))
                st.branch(i, j, k++, 0.0, 0.0);
            break;
        }
    }
    return sys;
}

DcSolution solve_dc(const MnaSystem& system)
{
    std::vector<double> x;
    try {
        x = sim::DenseLU(system.matrix).solve(system.rhs);
    } catch (const sim::SingularMatrixError& e) {
        throw CircuitError(CircuitError::Kind::Singular,
                           std::string("singular MNA system (voltage-source loop?): ") + e.what());
    }
    DcSolution sol;
    sol.node_voltages[system.ground] = 0.0;
    for (std::size_t i = 0; i < system.nodes.size(); ++i)
        sol.node_voltages[system.nodes[i]] = x[i];
    for (std::size_t k = 0; k < system.branches.size(); ++k)
        sol.branch_currents[system.branches[k]] = x[system.nodes.size() + k];
    return sol;
}

namespace {

enum class Method { Trapezoidal, BackwardEuler };

// Per-element reactive state carried between steps.
struct ReactiveState {
    double v = 0.0; // element voltage V(a) - V(b)
    double i = 0.0; // element current a -> b
};

class TransientEngine {
public:
    TransientEngine(const Circuit& c) : c_(c), nm_(c), state_(c.elements.size())
    {
        for (std::size_t e = 0; e < c.elements.size(); ++e) {
            const auto& el = c.elements[e];
            if (el.kind == Kind::Capacitor)
                state_[e].v = el.initial;
            if (el.kind == Kind::Inductor)
                state_[e].i = el.initial;
        }
    }

    std::size_t node_count() const { return nm_.names.size(); }
    const std::vector<std::string>& node_names() const { return nm_.names; }

    void set_epoch(double t)
    {
        closed_.assign(c_.elements.size(), false);
        for (std::size_t e = 0; e < c_.elements.size(); ++e)
            closed_[e] = c_.elements[e].kind == Kind::Switch && c_.elements[e].closed_at <= t;
        check_connected(
            c_, nm_,
            [&](const Element& el) {
                return el.kind != Kind::Switch || closed_[&el - c_.elements.data()];
            },
            "at t=" + std::to_string(t));
        branch_of_.assign(c_.elements.size(), -1);
        std::size_t k = node_count();
        for (std::size_t e = 0; e < c_.elements.size(); ++e) {
            const auto kind = c_.elements[e].kind;
            if (kind == Kind::VoltageSource || kind == Kind::Inductor ||
                (kind == Kind::Switch && closed_[e]))
                branch_of_[e] = static_cast<int>(k++);
        }
        size_ = k;
        cache_.clear();
    }

    /// Solves for a state consistent with the current capacitor voltages and
    /// inductor currents, filling capacitor currents and inductor voltages.
    /// Returns false when that system is singular.
    bool consistent_init(std::vector<double>& out)
    {
        // capacitors become voltage sources with their own branch rows
        std::vector<int> cap_branch(c_.elements.size(), -1);
        std::size_t k = size_;
        for (std::size_t e = 0; e < c_.elements.size(); ++e)
            if (c_.elements[e].kind == Kind::Capacitor)
                cap_branch[e] = static_cast<int>(k++);
        sim::DenseMatrix m(k);
        std::vector<double> b(k, 0.0);
        Stamper st{m, b};
        for (std::size_t e = 0; e < c_.elements.size(); ++e) {
            const auto& el = c_.elements[e];
            const int i = nm_(el.a), j = nm_(el.b);
            switch (el.kind) {
            case Kind::Resistor:
                st.conductance(i, j, 1.0 / el.value);
                break;
            case Kind::Capacitor:
                st.branch(i, j, static_cast<std::size_t>(cap_branch[e]), 0.0, state_[e].v);
                break;
            case Kind::Inductor: {
                // known current: branch row pins I_k
                const auto row = static_cast<std::size_t>(branch_of_[e]);
                if (i >= 0) m(i, row) += 1.0;
                if (j >= 0) m(j, row) -= 1.0;
                m(row, row) = 1.0;
                b[row] = state_[e].i;
                break;
            }
            case Kind::VoltageSource:
                st.branch(i, j, static_cast<std::size_t>(branch_of_[e]), 0.0, el.value);
                break;
            case Kind::Switch:
                if (closed_[e])
                    st.branch(i, j, static_cast<std::size_t>(branch_of_[e]), 0.0, 0.0);
                break;
            }
        }
        std::vector<double> x;
        try {
            x = sim::DenseLU(std::move(m)).solve(b);
        } catch (const sim::SingularMatrixError&) {
            return false;
        }
        for (std::size_t e = 0; e < c_.elements.size(); ++e) {
            const auto& el = c_.elements[e];
            if (el.kind == Kind::Capacitor)
                state_[e].i = x[static_cast<std::size_t>(cap_branch[e])];
            if (el.kind == Kind::Inductor)
                state_[e].v = voltage(x, el);
        }
        x.resize(size_);
        out = record(x);
        return true;
    }

    /// One companion-model step of size h; returns the recorded quantities.
    std::vector<double> step(double h, Method method)
    {
        const auto& lu = factor(h, method);
        std::vector<double> b(size_, 0.0);
        for (std::size_t e = 0; e < c_.elements.size(); ++e) {
            const auto& el = c_.elements[e];
            const int i = nm_(el.a), j = nm_(el.b);
            switch (el.kind) {
            case Kind::Capacitor: {
                const double g = (method == Method::Trapezoidal ? 2.0 : 1.0) * el.value / h;
                const double ieq = g * state_[e].v + (method == Method::Trapezoidal ? state_[e].i : 0.0);
                if (i >= 0) b[i] += ieq;
                if (j >= 0) b[j] -= ieq;
                break;
            }
            case Kind::Inductor: {
                const double r = (method == Method::Trapezoidal ? 2.0 : 1.0) * el.value / h;
                b[static_cast<std::size_t>(branch_of_[e])] =
                    -r * state_[e].i - (method == Method::Trapezoidal ? state_[e].v : 0.0);
                break;
            }
            case Kind::VoltageSource:
                b[static_cast<std::size_t>(branch_of_[e])] = el.value;
                break;
            default:
                break;
            }
        }
        const auto x = lu.solve(b);
        for (std::size_t e = 0; e < c_.elements.size(); ++e) {
            const auto& el = c_.elements[e];
            if (el.kind == Kind::Capacitor) {
                const double g = (method == Method::Trapezoidal ? 2.0 : 1.0) * el.value / h;
                const double v = voltage(x, el);
                state_[e].i = g * (v - state_[e].v) - (method == Method::Trapezoidal ? state_[e].i : 0.0);
                state_[e].v = v;
            } else if (el.kind == Kind::Inductor) {
                state_[e].i = x[static_cast<std::size_t>(branch_of_[e])];
                state_[e].v = voltage(x, el);
            }
        }
        return record(x);
    }

private:
    double voltage(const std::vector<double>& x, const Element& el) const
    {
        const int i = nm_(el.a), j = nm_(el.b);
        return (i >= 0 ? x[static_cast<std::size_t>(i)] : 0.0) - (j >= 0 ? x[static_cast<std::size_t>(j)] : 0.0);
    }

    // node voltages followed by one current per element
    std::vector<double> record(const std::vector<double>& x) const
    {
        std::vector<double> out(x.begin(), x.begin() + static_cast<long>(node_count()));
        for (std::size_t e = 0; e < c_.elements.size(); ++e) {
            const auto& el = c_.elements[e];
            double current = 0.0;
            switch (el.kind) {
            case Kind::Resistor:
                current = voltage(x, el) / el.value;
                break;
            case Kind::Capacitor:
            case Kind::Inductor:
                current = state_[e].i;
                break;
            case Kind::VoltageSource:
                current = x[static_cast<std::size_t>(branch_of_[e])];
                break;
            case Kind::Switch:
                current = closed_[e] ? x[static_cast<std::size_t>(branch_of_[e])] : 0.0;
                break;
            }
            out.push_back(current);
        }
        return out;
    }

    const sim::DenseLU& factor(double h, Method method)
    {
        for (const auto& entry : cache_)
            if (entry.h == h && entry.method == method)
                return entry.lu;
        sim::DenseMatrix m(size_);
        std::vector<double> dummy(size_, 0.0);
        Stamper st{m, dummy};
        for (std::size_t e = 0; e < c_.elements.size(); ++e) {
            const auto& el = c_.elements[e];
            const int i = nm_(el.a), j = nm_(el.b);
            const double scale = method == Method::Trapezoidal ? 2.0 : 1.0;
            switch (el.kind) {
            case Kind::Resistor:
                st.conductance(i, j, 1.0 / el.value);
                break;
            case Kind::Capacitor:
                st.conductance(i, j, scale * el.value / h);
                break;
            case Kind::Inductor:
                st.branch(i, j, static_cast<std::size_t>(branch_of_[e]), scale * el.value / h, 0.0);
                break;
            case Kind::VoltageSource:
                st.branch(i, j, static_cast<std::size_t>(branch_of_[e]), 0.0, 0.0);
                break;
            case Kind::Switch:
                if (closed_[e])
                    st.branch(i, j, static_cast<std::size_t>(branch_of_[e]), 0.0, 0.0);
                break;
            }
        }
        try {
            cache_.push_back({h, method, sim::DenseLU(std::move(m))});
        } catch (const sim::SingularMatrixError& err) {
            throw CircuitError(CircuitError::Kind::Singular,
                               std::string("singular transient system: ") + err.what());
        }
        // only a handful of (h, method) pairs occur per epoch
        return cache_.back().lu;
    }

    struct Factored {
        double h;
        Method method;
        sim::DenseLU lu;
    };

    const Circuit& c_;
    NodeMap nm_;
    std::vector<ReactiveState> state_;
    std::vector<bool> closed_;
    std::vector<int> branch_of_;
    std::size_t size_ = 0;
    std::vector<Factored> cache_;
};

} // namespace

sim::TimeSeries transient(const Circuit& circuit, double duration, std::size_t n_samples,
                          const TransientOptions& options)
{
    if (!(duration > 0.0) || !std::isfinite(duration))
        throw std::invalid_argument("transient duration must be positive");
    if (n_samples < 2)
        throw std::invalid_argument("transient needs at least two samples");
    validate(circuit);

    const double h = options.internal_step > 0.0
                         ? options.internal_step
                         : duration / (50.0 * static_cast<double>(n_samples));

    std::vector<double> events;
    for (const auto& e : circuit.elements)
        if (e.kind == Kind::Switch && e.closed_at > 0.0 && e.closed_at < duration)
            events.push_back(e.closed_at);
    std::sort(events.begin(), events.end());
    events.erase(std::unique(events.begin(), events.end()), events.end());
    events.push_back(duration);

    const auto grid = sim::uniform_grid(0.0, duration, n_samples);
    TransientEngine engine(circuit);
    const std::size_t width = engine.node_count() + circuit.elements.size();
    std::vector<std::vector<double>> columns(width, std::vector<double>(n_samples));

    std::size_t next = 0;
    auto emit = [&](double t_prev, const std::vector<double>& prev, double t_cur,
                    const std::vector<double>& cur) {
        while (next < n_samples && grid[next] <= t_cur) {
            const double w = t_cur > t_prev ? (grid[next] - t_prev) / (t_cur - t_prev) : 1.0;
            for (std::size_t q = 0; q < width; ++q)
                columns[q][next] = prev[q] + w * (cur[q] - prev[q]);
            ++next;
        }
    };

    double t = 0.0;
    std::vector<double> prev;
    for (double t_end : events) {
        engine.set_epoch(t);
        std::vector<double> init;
        const bool consistent = engine.consistent_init(init);
        // equal steps no longer than h; times come from the index so no sliver step appears
        const double t0 = t;
        const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil((t_end - t0) / h * (1 - 1e-12))));
        const double dt = (t_end - t0) / static_cast<double>(steps);
        for (std::size_t k = 1; k <= steps; ++k) {
            const bool first = k == 1;
            auto sol = engine.step(dt, consistent || !first ? Method::Trapezoidal : Method::BackwardEuler);
            if (prev.empty())
                prev = consistent ? init : sol;
            else if (first && consistent)
                prev = init;
            const double t_next = k == steps ? t_end : t0 + static_cast<double>(k) * dt;
            emit(t, prev, t_next, sol);
            prev = std::move(sol);
            t = t_next;
        }
    }

    sim::TimeSeries out(grid);
    const auto& nodes = engine.node_names();
    for (std::size_t i = 0; i < nodes.size(); ++i)
        out.add_channel("V(" + nodes[i] + ")", "V", std::move(columns[i]));
    for (std::size_t e = 0; e < circuit.elements.size(); ++e) {
        const auto& el = circuit.elements[e];
        const bool wanted = options.all_currents || el.kind == Kind::VoltageSource ||
                            el.kind == Kind::Inductor || el.kind == Kind::Switch;
        if (wanted)
            out.add_channel("I(" + el.id + ")", "A", std::move(columns[nodes.size() + e]));
    }
    return out;
}

Circuit pfn_template(int n_sections, double inductance_per_section,
                     double capacitance_per_section, double load_resistance,
                     double charge_voltage)
{
    if (n_sections < 1)
        throw std::invalid_argument("a pulse-forming network needs at least one section");
    for (double v : {inductance_per_section, capacitance_per_section, load_resistance})
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("pulse-forming network values must be > 0");

    Circuit c;
    for (int k = 1; k <= n_sections; ++k) {
        const std::string node = "c" + std::to_string(k);
        const std::string next = k == n_sections ? "out" : "c" + std::to_string(k + 1);
        c.elements.push_back(Element::capacitor("C" + std::to_string(k), node, c.ground,
                                                capacitance_per_section, charge_voltage));
        c.elements.push_back(Element::inductor("L" + std::to_string(k), node, next,
                                               inductance_per_section));
    }
    c.elements.push_back(Element::switch_("SW", "out", "load", 0.0));
    c.elements.push_back(Element::resistor("RLOAD", "load", c.ground, load_resistance));
    return c;
}

} // namespace vlab::circuit
