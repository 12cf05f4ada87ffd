#include <catch2/catch_amalgamated.hpp>

#include "vlab/beam/matching.hpp"
#include "vlab/beam/optics.hpp"
#include "vlab/circuit/circuit.hpp"
#include "vlab/scheme/config.hpp"
#include "vlab/scheme/instantiate.hpp"
#include "vlab/vacuum/network.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

using namespace vlab;

namespace {

// ---- vacuum ----------------------------------------------------------------

vacuum::VacuumNetwork station(bool valve_open)
{
    vacuum::VacuumNetwork n;
    n.chambers.push_back({"fore", 20.0, 1e5, 1e-4});
    n.chambers.push_back({"main", 100.0, 1e5, 1e-3});
    n.pumps.push_back({"rough", "fore", 10.0, 1e-1});
    n.pumps.push_back({"turbo", "main", 200.0, 1e-6});
    n.links.push_back({"valve", "fore", "main", 50.0, valve_open});
    return n;
}

Eigen::VectorXd dense_equilibrium(const vacuum::VacuumNetwork& n)
{
    const auto size = static_cast<Eigen::Index>(n.chambers.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(size, size);
    Eigen::VectorXd b(size);
    for (Eigen::Index i = 0; i < size; ++i)
        b(i) = -n.chambers[static_cast<std::size_t>(i)].outgassing_rate;
    for (const auto& l : n.links) {
        if (!l.valve_open)
            continue;
        const auto i = static_cast<Eigen::Index>(n.chamber_index(l.from));
        const auto j = static_cast<Eigen::Index>(n.chamber_index(l.to));
        a(i, i) -= l.conductance;
        a(j, j) -= l.conductance;
        a(i, j) += l.conductance;
        a(j, i) += l.conductance;
    }
    for (const auto& p : n.pumps) {
        const auto i = static_cast<Eigen::Index>(n.chamber_index(p.chamber));
        a(i, i) -= p.speed;
        b(i) -= p.speed * p.ultimate_pressure;
    }
    return a.fullPivLu().solve(b);
}

// ---- optics ----------------------------------------------------------------

beam::Matrix2 mul(const beam::Matrix2& a, const beam::Matrix2& b)
{
    return {a.m11 * b.m11 + a.m12 * b.m21, a.m11 * b.m12 + a.m12 * b.m22, a.m21 * b.m11 + a.m22 * b.m21,
            a.m21 * b.m12 + a.m22 * b.m22};
}

beam::Element random_element(std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> kind(0, 3);
    std::uniform_real_distribution<double> len(0.05, 1.0), k(-5.0, 5.0), angle(-0.5, 0.5), f(0.2, 20.0);
    switch (kind(rng)) {
    case 0: return beam::Element::drift(len(rng));
    case 1: return beam::Element::quadrupole(len(rng), k(rng));
    case 2: return beam::Element::sector_bend(len(rng), angle(rng));
    default: return beam::Element::thin_lens(std::bernoulli_distribution(0.5)(rng) ? f(rng) : -f(rng));
    }
}

beam::Matrix2 random_unimodular(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> phi(0.0, 2 * std::numbers::pi), s(0.3, 3.0), sh(-2.0, 2.0);
    const double p = phi(rng), sc = s(rng), c = sh(rng);
    const beam::Matrix2 rot{std::cos(p), std::sin(p), -std::sin(p), std::cos(p)};
    return mul(rot, mul(beam::Matrix2{sc, 0.0, 0.0, 1.0 / sc}, beam::Matrix2{1.0, c, 0.0, 1.0}));
}

// ---- circuits --------------------------------------------------------------

double kcl_residual(const circuit::Circuit& c, const sim::TimeSeries& ts)
{
    double worst = 0.0;
    for (const auto& node : c.nodes())
        for (std::size_t k = 0; k < ts.size(); ++k) {
            double sum = 0.0, scale = 0.0;
            for (const auto& e : c.elements) {
                const double i = ts.channel("I(" + e.id + ")").values[k];
                sum += (e.a == node) ? i : (e.b == node ? -i : 0.0);
                scale = std::max(scale, std::abs(i));
            }
            if (scale > 0)
                worst = std::max(worst, std::abs(sum) / scale);
        }
    return worst;
}

std::vector<double> crossings(const std::vector<double>& t, const std::vector<double>& y, double level)
{
    std::vector<double> out;
    for (std::size_t k = 1; k < y.size(); ++k)
        if ((y[k - 1] > level) != (y[k] > level))
            out.push_back(t[k - 1] + (t[k] - t[k - 1]) * (y[k - 1] - level) / (y[k - 1] - y[k]));
    return out;
}

} // namespace

TEST_CASE("single-chamber pump-down follows the exponential", "[acc:vacuum-analytic]")
{
    const double V = 100, S = 10, p0 = 1000, p_ult = 1e-9;
    vacuum::VacuumNetwork n;
    n.chambers.push_back({"chamber", V, p0, 0.0});
    n.pumps.push_back({"pump", "chamber", S, p_ult});

    const auto start = std::chrono::steady_clock::now();
    const auto ts = vacuum::pumpdown(n, 60.0, 20);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    REQUIRE(ts.size() == 20);
    double worst = 0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const double t = ts.times()[k];
        CHECK(std::abs(t - 60.0 * k / 19.0) <= 1e-12);
        const double exact = p_ult + (p0 - p_ult) * std::exp(-S * t / V);
        worst = std::max(worst, std::abs(ts.channel("chamber").values[k] - exact) / exact);
    }
    INFO("worst relative error " << worst << ", runtime " << elapsed << " s");
    CHECK(worst <= 1e-3);
    CHECK(elapsed < 1.0);
}

TEST_CASE("two-chamber equilibrium matches a dense solve", "[acc:vacuum-steady]")
{
    for (bool open : {true, false}) {
        const auto n = station(open);
        const auto ss = vacuum::steady_state(n);
        const auto oracle = dense_equilibrium(n);
        for (std::size_t i = 0; i < n.chambers.size(); ++i) {
            const double want = oracle(static_cast<Eigen::Index>(i));
            INFO(n.chambers[i].id << " valve " << open);
            CHECK(std::abs(ss.at(n.chambers[i].id) - want) <= 1e-9 * std::abs(want));
        }
    }
}

TEST_CASE("total gas is conserved with pumps off", "[acc:vacuum-steady]")
{
    auto n = station(true);
    n.chambers[0].initial_pressure = 2e4;
    n.chambers[0].outgassing_rate = 0;
    n.chambers[1].outgassing_rate = 0;
    for (auto& p : n.pumps)
        p.speed = 0;
    const sim::SolverSettings settings;
    const auto ts = vacuum::pumpdown(n, 1000.0, 201, settings);
    const double total0 = 20.0 * 2e4 + 100.0 * 1e5;
    double drift = 0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const double total = 20.0 * ts.channel("fore").values[k] + 100.0 * ts.channel("main").values[k];
        drift = std::max(drift, std::abs(total - total0) / total0);
    }
    INFO("drift " << drift);
    CHECK(drift < 10 * settings.rel_tol);
}

TEST_CASE("element matrices are unimodular", "[acc:optics]")
{
    std::mt19937_64 rng(17);
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto e = random_element(rng);
        for (auto p : {beam::Plane::X, beam::Plane::Y})
            worst = std::max(worst, std::abs(beam::element_matrix(e, p).det() - 1.0));
    }
    INFO("worst |det - 1| " << worst);
    CHECK(worst <= 1e-12);
}

TEST_CASE("Twiss invariant survives unimodular maps", "[acc:optics]")
{
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> a(-3, 3), b(0.1, 30);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const beam::Twiss tw{a(rng), b(rng), 1e-6};
        const auto m = random_unimodular(rng);
        const auto out = beam::propagate_twiss(tw, m);
        const double g = tw.gamma();
        const double gamma_t = m.m21 * m.m21 * tw.beta - 2 * m.m21 * m.m22 * tw.alpha + m.m22 * m.m22 * g;
        worst = std::max(worst, std::abs(gamma_t * out.beta - out.alpha * out.alpha - 1.0) /
                                    std::max(1.0, gamma_t * out.beta));
    }
    INFO("worst invariant error " << worst);
    CHECK(worst <= 1e-10);
}

TEST_CASE("thin-lens FODO phase advance", "[acc:optics]")
{
    const double l = 1.5;
    for (double f : {0.8, 1.0, 1.5, 3.0, 10.0}) {
        const beam::Beamline cell{beam::Element::thin_lens(f), beam::Element::drift(l), beam::Element::thin_lens(-f),
                                  beam::Element::drift(l)};
        const auto st = beam::cell_stability(cell);
        const double cos_mu = 1 - l * l / (2 * f * f);
        INFO("f = " << f);
        REQUIRE(st.stable());
        CHECK(std::abs(std::cos(st.x.phase_advance) - cos_mu) <= 1e-9);
        CHECK(std::abs(std::cos(st.y.phase_advance) - cos_mu) <= 1e-9);
    }
}

TEST_CASE("drift from a waist", "[acc:optics]")
{
    for (double b0 : {0.5, 2.0, 10.0}) {
        const auto env = beam::envelope({beam::Element::drift(4.0), beam::Element::drift(3.0)},
                                        beam::BeamTwiss::both({0.0, b0, 1e-6}), 0.05);
        for (std::size_t k = 0; k < env.size(); ++k) {
            const double s = env.times()[k];
            const double exact = b0 + s * s / b0;
            CHECK(std::abs(env.channel("beta_x").values[k] - exact) <= 1e-9 * exact);
            CHECK(std::abs(env.channel("beta_y").values[k] - exact) <= 1e-9 * exact);
        }
    }
}

TEST_CASE("matching recovers perturbed quadrupoles", "[acc:matching]")
{
    const beam::Beamline line{beam::Element::drift(1.0), beam::Element::quadrupole(0.3, 1.2),
                              beam::Element::drift(2.0), beam::Element::quadrupole(0.3, -1.0),
                              beam::Element::drift(1.0)};
    const std::vector<std::size_t> tunable{1, 3};
    const beam::BeamTwiss tw0{{-0.5, 6.0, 1e-6}, {0.8, 4.0, 1e-6}};
    const auto target = beam::transport(line, tw0);
    for (double s1 : {0.9, 1.1})
        for (double s2 : {0.9, 1.1}) {
            auto start = line;
            start[1].strength *= s1;
            start[3].strength *= s2;
            const auto r = beam::match_quadrupoles(start, tunable, tw0, target);
            INFO("perturbation " << s1 << ", " << s2 << ": residual " << r.residual << " after "
                                 << r.iterations << " iterations");
            CHECK(r.residual < 1e-6);
            CHECK(r.iterations <= 2000);
            CHECK(beam::matching_residual(r.line, tw0, target) == r.residual);
            const auto again = beam::match_quadrupoles(start, tunable, tw0, target);
            CHECK(again.strengths == r.strengths);
            CHECK(again.iterations == r.iterations);
        }
}

TEST_CASE("RC discharge at t = RC", "[acc:circuits]")
{
    const double R = 1e3, C = 1e-6, v0 = 10.0;
    circuit::Circuit c;
    c.elements = {circuit::Element::capacitor("C1", "top", "0", C, v0), circuit::Element::resistor("R1", "top", "0", R)};
    const auto ts = circuit::transient(c, R * C, 101);
    const double exact = v0 / std::numbers::e;
    CHECK(std::abs(ts.channel("V(top)").values.back() - exact) / exact < 5e-3);
}

TEST_CASE("LC period", "[acc:circuits]")
{
    const double L = 1e-3, C = 1e-6;
    circuit::Circuit c;
    c.elements = {circuit::Element::capacitor("C1", "top", "0", C, 10.0), circuit::Element::inductor("L1", "top", "0", L)};
    const double period = 2 * std::numbers::pi * std::sqrt(L * C);
    const auto ts = circuit::transient(c, 5 * period, 5001);
    const auto zc = crossings(ts.times(), ts.channel("V(top)").values, 0.0);
    REQUIRE(zc.size() >= 9);
    const double measured = (zc[8] - zc[0]) / 4.0;
    INFO("period " << measured << " vs " << period);
    CHECK(std::abs(measured - period) / period < 5e-3);
}

TEST_CASE("Kirchhoff residuals in a switched RLC network", "[acc:circuits]")
{
    circuit::Circuit c;
    c.elements = {circuit::Element::voltage_source("V1", "in", "0", 24.0),
                  circuit::Element::resistor("R1", "in", "a", 50.0),
                  circuit::Element::capacitor("C1", "a", "0", 2e-6, 5.0),
                  circuit::Element::inductor("L1", "a", "b", 1e-3, 0.01),
                  circuit::Element::resistor("R2", "b", "0", 30.0),
                  circuit::Element::switch_("S1", "b", "c", 3e-4),
                  circuit::Element::capacitor("C2", "c", "0", 1e-6),
                  circuit::Element::resistor("R3", "c", "0", 1e3)};
    circuit::TransientOptions opt;
    opt.all_currents = true;
    const auto ts = circuit::transient(c, 2e-3, 401, opt);
    const double r = kcl_residual(c, ts);
    INFO("worst KCL residual " << r);
    CHECK(r < 1e-6);
}

TEST_CASE("matched five-section PFN", "[acc:circuits]")
{
    const int n = 5;
    const double L = 1e-6, C = 1e-9, v0 = 1000.0;
    const double z = std::sqrt(L / C), tau = 2 * n * std::sqrt(L * C);
    const auto c = circuit::pfn_template(n, L, C, z, v0);
    circuit::TransientOptions opt;
    opt.all_currents = true;
    const auto ts = circuit::transient(c, 10 * tau, 4000, opt);
    const auto& vl = ts.channel("V(load)").values;
    const auto& t = ts.times();

    // flat-top duration measured at half the ideal amplitude v0/2
    const auto edges = crossings(t, vl, v0 / 4);
    REQUIRE(edges.size() >= 2);
    const double width = edges[1] - edges[0];
    INFO("pulse width " << width << " vs " << tau);
    CHECK(std::abs(width - tau) / tau < 0.15);

    double energy = 0;
    for (std::size_t k = 1; k < vl.size(); ++k)
        energy += 0.5 * (vl[k] * vl[k] + vl[k - 1] * vl[k - 1]) / z * (t[k] - t[k - 1]);
    const double stored = n * C * v0 * v0 / 2;
    INFO("load energy " << energy << " of " << stored);
    CHECK(std::abs(energy - stored) / stored < 0.05);
    CHECK(kcl_residual(c, ts) < 1e-6);
}

TEST_CASE("built-in templates validate and run their defaults", "[acc:scheme]")
{
    const auto& all = scheme::builtin_templates();
    REQUIRE(all.size() == 4);
    std::set<scheme::LabKind> kinds;
    for (const auto& t : all) {
        kinds.insert(t.lab_kind);
        const auto c = scheme::default_config(t);
        CHECK(scheme::validate_config(t, c).empty());
        const auto ts = scheme::run_config(t, c);
        CHECK(ts.channels().size() == t.output_channels.size());
        CHECK_NOTHROW(ts.validate());
    }
    CHECK(kinds.size() == 4);
}

TEST_CASE("a thousand random in-bounds configs run", "[acc:scheme]")
{
    std::mt19937_64 rng(1000);
    const auto& all = scheme::builtin_templates();
    int failures = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto& t = all[static_cast<std::size_t>(i) % all.size()];
        const auto c = scheme::random_config(t, rng);
        if (!scheme::validate_config(t, c).empty()) {
            ++failures;
            continue;
        }
        try {
            const auto ts = scheme::run_config(t, c);
            ts.validate();
        } catch (const std::exception& e) {
            ++failures;
            UNSCOPED_INFO(t.template_id << ": " << e.what() << " for " << scheme::config_to_json(c).dump());
        }
    }
    CHECK(failures == 0);
}

TEST_CASE("instantiate is deterministic", "[acc:scheme]")
{
    std::mt19937_64 rng(77);
    for (const auto& t : scheme::builtin_templates())
        for (int i = 0; i < 25; ++i) {
            const auto c = scheme::random_config(t, rng);
            CHECK(scheme::instantiate(t, c) == scheme::instantiate(t, c));
        }
}
