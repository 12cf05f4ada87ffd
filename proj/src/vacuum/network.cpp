#include "vlab/vacuum/network.hpp"

#include "vlab/sim/dense_lu.hpp"

#include <cmath>
#include <memory>
#include <numeric>
#include <set>

namespace vlab::vacuum {

namespace {

bool positive_finite(double v) { return v > 0.0 && std::isfinite(v); }

} // namespace

void VacuumNetwork::validate() const
{
    if (chambers.empty())
        throw NetworkError("network has no chambers");
    std::set<std::string> ids;
    for (const auto& c : chambers) {
        if (!ids.insert(c.id).second)
            throw NetworkError("duplicate chamber id '" + c.id + "'");
        if (!positive_finite(c.volume))
            throw NetworkError("chamber '" + c.id + "' volume must be > 0");
        if (!positive_finite(c.initial_pressure))
            throw NetworkError("chamber '" + c.id + "' initial pressure must be > 0");
        if (!(c.outgassing_rate >= 0.0) || !std::isfinite(c.outgassing_rate))
            throw NetworkError("chamber '" + c.id + "' outgassing rate must be >= 0");
    }
    for (const auto& p : pumps) {
        if (!ids.count(p.chamber))
            throw NetworkError("pump '" + p.id + "' references unknown chamber '" + p.chamber + "'");
        if (!(p.speed >= 0.0) || !std::isfinite(p.speed))
            throw NetworkError("pump '" + p.id + "' speed must be >= 0");
        if (!positive_finite(p.ultimate_pressure))
            throw NetworkError("pump '" + p.id + "' ultimate pressure must be > 0");
    }
    for (const auto& l : links) {
        if (!ids.count(l.from) || !ids.count(l.to))
            throw NetworkError("link '" + l.id + "' references an unknown chamber");
        if (l.from == l.to)
            throw NetworkError("link '" + l.id + "' endpoints must be distinct");
        if (!positive_finite(l.conductance))
            throw NetworkError("link '" + l.id + "' conductance must be > 0");
    }
}

std::size_t VacuumNetwork::chamber_index(const std::string& id) const
{
    for (std::size_t i = 0; i < chambers.size(); ++i)
        if (chambers[i].id == id)
            return i;
    throw NetworkError("unknown chamber '" + id + "'");
}

Conductance::Conductance(double value) : value_(value), infinite_(false)
{
    if (!positive_finite(value))
        throw std::invalid_argument("conductance must be positive and finite");
}

double effective_speed(double pump_speed, Conductance conductance)
{
    if (!positive_finite(pump_speed))
        throw std::invalid_argument("pump speed must be positive");
    if (conductance.is_infinite())
        return pump_speed;
    return 1.0 / (1.0 / pump_speed + 1.0 / conductance.value());
}

namespace {

// Index-resolved copy of the network so the rhs does no string lookups.
struct Resolved {
    struct PumpTerm { std::size_t chamber; double speed; double p_ult; };
    struct LinkTerm { std::size_t a; std::size_t b; double c; };

    std::vector<double> volume, load;
    std::vector<PumpTerm> pumps;
    std::vector<LinkTerm> links;

    explicit Resolved(const VacuumNetwork& net)
    {
        net.validate();
        for (const auto& c : net.chambers) {
            volume.push_back(c.volume);
            load.push_back(c.outgassing_rate);
        }
        for (const auto& p : net.pumps)
            if (p.speed > 0.0)
                pumps.push_back({net.chamber_index(p.chamber), p.speed, p.ultimate_pressure});
        for (const auto& l : net.links)
            if (l.valve_open)
                links.push_back({net.chamber_index(l.from), net.chamber_index(l.to), l.conductance});
    }

    // Gas throughput into each chamber, Pa*l/s.
    void throughput(std::span<const double> p, std::span<double> q) const
    {
        for (std::size_t i = 0; i < volume.size(); ++i)
            q[i] = load[i];
        for (const auto& l : links) {
            const double flow = l.c * (p[l.b] - p[l.a]);
            q[l.a] += flow;
            q[l.b] -= flow;
        }
        for (const auto& pt : pumps)
            q[pt.chamber] -= pt.speed * (p[pt.chamber] - pt.p_ult);
    }
};

} // namespace

void pressure_rates(const VacuumNetwork& network, std::span<const double> pressures,
                    std::span<double> rates)
{
    const Resolved r(network);
    if (pressures.size() != r.volume.size() || rates.size() != r.volume.size())
        throw std::invalid_argument("pressure vector length mismatch");
    r.throughput(pressures, rates);
    for (std::size_t i = 0; i < r.volume.size(); ++i)
        rates[i] /= r.volume[i];
}

sim::OdeSystem build_ode(const VacuumNetwork& network)
{
    auto resolved = std::make_shared<const Resolved>(network);
    const std::size_t n = resolved->volume.size();

    sim::OdeSystem sys;
    sys.dimension = n;
    for (const auto& c : network.chambers) {
        sys.state_labels.push_back(c.id);
        sys.state_units.push_back("ln(Pa)");
    }
    sys.rhs = [resolved, n](double, std::span<const double> u, std::span<double> du) {
        thread_local std::vector<double> p;
        p.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            p[i] = std::exp(u[i]);
        resolved->throughput(p, du);
        // d ln p / dt = (dp/dt) / p
        for (std::size_t i = 0; i < n; ++i)
            du[i] /= resolved->volume[i] * p[i];
    };
    return sys;
}

sim::TimeSeries pumpdown(const VacuumNetwork& network, double duration, std::size_t n_samples,
                         const sim::SolverSettings& settings)
{
    if (!(duration > 0.0) || !std::isfinite(duration))
        throw std::invalid_argument("pump-down duration must be positive");
    const auto sys = build_ode(network);
    std::vector<double> u0;
    for (const auto& c : network.chambers)
        u0.push_back(std::log(c.initial_pressure));

    const auto log_series = sim::integrate_ivp(sys, u0, 0.0, duration, n_samples, settings);
    sim::TimeSeries out(log_series.times());
    for (std::size_t i = 0; i < log_series.channels().size(); ++i) {
        const auto& ch = log_series.channels()[i];
        std::vector<double> p(ch.values.size());
        for (std::size_t k = 0; k < p.size(); ++k)
            p[k] = std::exp(ch.values[k]);
        // exp(log(p0)) may be off by an ulp
        p[0] = network.chambers[i].initial_pressure;
        out.add_channel(ch.label, "Pa", std::move(p));
    }
    return out;
}

std::map<std::string, double> steady_state(const VacuumNetwork& network)
{
    const Resolved r(network);
    const std::size_t n = r.volume.size();

    // connected components through open valves
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& l : r.links)
        parent[find(l.a)] = find(l.b);

    std::vector<bool> pumped(n, false);
    std::vector<double> comp_load(n, 0.0), comp_gas(n, 0.0), comp_volume(n, 0.0);
    for (const auto& pt : r.pumps)
        pumped[find(pt.chamber)] = true;
    for (std::size_t i = 0; i < n; ++i) {
        const auto root = find(i);
        comp_load[root] += r.load[i];
        comp_gas[root] += r.volume[i] * network.chambers[i].initial_pressure;
        comp_volume[root] += r.volume[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto root = find(i);
        if (!pumped[root] && comp_load[root] > 0.0)
            throw NetworkError("chamber '" + network.chambers[i].id +
                               "' has gas load but no pumping path; no equilibrium exists");
    }

    // Balance rows for pumped components; unpumped, unloaded components are
    // pinned to their conserved mean pressure.
    sim::DenseMatrix a(n);
    std::vector<double> b(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto root = find(i);
        if (!pumped[root]) {
            a(i, i) = 1.0;
            b[i] = comp_gas[root] / comp_volume[root];
            continue;
        }
        b[i] = -r.load[i];
    }
    for (const auto& l : r.links) {
        if (!pumped[find(l.a)])
            continue;
        a(l.a, l.a) -= l.c;
        a(l.a, l.b) += l.c;
        a(l.b, l.b) -= l.c;
        a(l.b, l.a) += l.c;
    }
    for (const auto& pt : r.pumps) {
        a(pt.chamber, pt.chamber) -= pt.speed;
        b[pt.chamber] -= pt.speed * pt.p_ult;
    }

    std::vector<double> p;
    try {
        p = sim::DenseLU(std::move(a)).solve(b);
    } catch (const sim::SingularMatrixError& e) {
        throw NetworkError(std::string("singular balance system: ") + e.what());
    }

    std::map<std::string, double> out;
    for (std::size_t i = 0; i < n; ++i)
        out[network.chambers[i].id] = p[i];
    return out;
}

} // namespace vlab::vacuum
