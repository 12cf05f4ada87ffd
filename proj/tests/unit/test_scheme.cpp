#include <catch2/catch_amalgamated.hpp>

#include "vlab/scheme/config.hpp"
#include "vlab/scheme/instantiate.hpp"
#include "vlab/scheme/template.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace vlab;
using namespace vlab::scheme;
using nlohmann::json;

namespace {

const SchemeTemplate& builtin(const std::string& id)
{
    for (const auto& t : builtin_templates())
        if (t.template_id == id)
            return t;
    throw std::runtime_error("no builtin " + id);
}

json builtin_doc(const std::string& id) { return template_to_json(builtin(id)); }

// Brute-force circuit isomorphism: some bijection of non-ground nodes maps
// the element multiset of `a` onto that of `b` (ids ignored).
bool isomorphic(const circuit::Circuit& a, const circuit::Circuit& b)
{
    const auto na = a.nodes(), nb = b.nodes();
    if (na.size() != nb.size() || a.elements.size() != b.elements.size() || na.size() > 8)
        return false;
    using Key = std::tuple<int, std::string, std::string, double, double, double>;
    auto keys = [](const circuit::Circuit& c, const std::map<std::string, std::string>& rename) {
        std::multiset<Key> out;
        for (const auto& e : c.elements) {
            auto map = [&](const std::string& n) { return n == c.ground ? std::string("#gnd") : rename.at(n); };
            out.insert({static_cast<int>(e.kind), map(e.a), map(e.b), e.value, e.initial, e.closed_at});
        }
        return out;
    };
    std::map<std::string, std::string> ident;
    for (const auto& n : nb)
        ident[n] = n;
    const auto target = keys(b, ident);
    std::vector<std::size_t> perm(na.size());
    for (std::size_t i = 0; i < perm.size(); ++i)
        perm[i] = i;
    do {
        std::map<std::string, std::string> rename;
        for (std::size_t i = 0; i < na.size(); ++i)
            rename[na[i]] = nb[perm[i]];
        if (keys(a, rename) == target)
            return true;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return false;
}

} // namespace

TEST_CASE("four built-in templates, one per lab kind", "[scheme]")
{
    const auto& all = builtin_templates();
    REQUIRE(all.size() == 4);
    std::set<LabKind> kinds;
    for (const auto& t : all) {
        kinds.insert(t.lab_kind);
        CHECK(validate_config(t, default_config(t)).empty());
        CHECK_FALSE(t.output_channels.empty());
        for (const auto& tag : t.discipline_tags)
            CHECK(std::find(discipline_directions().begin(), discipline_directions().end(), tag) !=
                  discipline_directions().end());
    }
    CHECK(kinds.size() == 4);
    CHECK(builtin("pfn_modulator").find_slot("pfn")->params_for("pfn_ladder")[0].default_value == 5);
    CHECK(builtin("transport_channel").slots.size() == 2);
}

TEST_CASE("shipped template files match the compiled-in copies", "[scheme]")
{
    const auto loaded = load_template_dir(VLAB_TEMPLATE_DIR);
    REQUIRE(loaded.size() == 4);
    for (const auto& t : loaded)
        CHECK(t == builtin(t.template_id));
}

TEST_CASE("template documents round-trip", "[scheme]")
{
    for (const auto& t : builtin_templates()) {
        const auto again = template_from_json(json::parse(template_to_json(t).dump()));
        CHECK(again == t);
    }
}

TEST_CASE("malformed templates are rejected", "[scheme][errors]")
{
    auto rejects = [](const json& doc) { CHECK_THROWS_AS(template_from_json(doc), TemplateError); };

    SECTION("unknown fields at any level")
    {
        auto d = builtin_doc("vacuum_station");
        d["colour"] = "red";
        rejects(d);
        d = builtin_doc("vacuum_station");
        d["slots"][0]["tooltip"] = "x";
        rejects(d);
        d = builtin_doc("vacuum_station");
        d["slots"][0]["params"]["rotary_pump"][0]["step"] = 1;
        rejects(d);
        d = builtin_doc("vacuum_station");
        d["fixed_structure"]["chambers"][0]["temperature"] = 300;
        rejects(d);
        d = builtin_doc("transport_channel");
        d["fixed_structure"]["elements"][1]["k"] = 1.0;
        rejects(d);
    }
    SECTION("param spec invariants")
    {
        auto d = builtin_doc("measurement_bench");
        auto& p = d["slots"][0]["params"]["resistor"][0];
        p["min"] = 200;
        p["max"] = 100;
        rejects(d);
        d = builtin_doc("measurement_bench");
        d["slots"][0]["params"]["resistor"][0]["default"] = 1e6;
        rejects(d);
        d = builtin_doc("measurement_bench");
        d["slots"][2]["params"]["capacitor"][1]["scale"] = "log";
        rejects(d); // min = -20
        d = builtin_doc("pfn_modulator");
        d["slots"][0]["params"]["pfn_ladder"][0]["default"] = 4.5;
        rejects(d);
    }
    SECTION("slot invariants")
    {
        auto d = builtin_doc("vacuum_station");
        d["slots"][1]["slot_id"] = "roughing";
        rejects(d);
        d = builtin_doc("vacuum_station");
        d["slots"][0]["default_kind"] = "turbomolecular_pump";
        rejects(d);
        d = builtin_doc("vacuum_station");
        d["slots"][0]["allowed_kinds"] = json::array();
        rejects(d);
        d = builtin_doc("vacuum_station");
        d["slots"][0]["params"]["rotary_pump"][1]["name"] = "speed";
        rejects(d);
        d = builtin_doc("vacuum_station");
        d["slots"][0]["params"]["rotary_pump"].erase(1);
        rejects(d); // kind needs ultimate_pressure
    }
    SECTION("kinds must exist for the lab and fit their placement")
    {
        auto d = builtin_doc("vacuum_station");
        d["slots"][0]["allowed_kinds"].push_back("quadrupole");
        d["slots"][0]["params"]["quadrupole"] = json::array();
        rejects(d);
        d = builtin_doc("vacuum_station");
        d["slots"][0]["allowed_kinds"].push_back("valve_open");
        d["slots"][0]["params"]["valve_open"] = builtin_doc("vacuum_station")["slots"][1]["params"]["valve_open"];
        rejects(d);
    }
    SECTION("slots are placed exactly once")
    {
        auto d = builtin_doc("transport_channel");
        d["fixed_structure"]["elements"][2] = {{"kind", "drift"}, {"length", 1.0}};
        rejects(d);
        d = builtin_doc("transport_channel");
        d["fixed_structure"]["elements"].push_back({{"slot", "q1"}});
        rejects(d);
        d = builtin_doc("transport_channel");
        d["fixed_structure"]["elements"].push_back({{"slot", "q9"}});
        rejects(d);
    }
    SECTION("output channels")
    {
        auto d = builtin_doc("vacuum_station");
        d["output_channels"] = json::array();
        rejects(d);
        d = builtin_doc("vacuum_station");
        d["output_channels"].push_back({{"label", "loadlock"}, {"unit", "Pa"}});
        rejects(d);
        d = builtin_doc("measurement_bench");
        d["output_channels"][0]["unit"] = "A";
        rejects(d);
    }
    SECTION("unknown lab kind and bad directives")
    {
        auto d = builtin_doc("vacuum_station");
        d["lab_kind"] = "cryogenics";
        rejects(d);
        d = builtin_doc("vacuum_station");
        d["sim_defaults"] = {{"duration", 10.0}, {"n_samples", 1}};
        rejects(d);
        d = builtin_doc("transport_channel");
        d["sim_defaults"] = json::object();
        rejects(d);
    }
}

TEST_CASE("validation reports", "[scheme]")
{
    const auto& t = builtin("vacuum_station");

    SECTION("param just above max")
    {
        auto c = default_config(t);
        c.param_values["high_vacuum"]["speed"] = 2000 * (1 + 1e-12);
        const auto r = validate_config(t, c);
        REQUIRE(r.size() == 1);
        CHECK(r[0].slot == "high_vacuum");
        CHECK(r[0].param == "speed");
        CHECK(r[0].reason == "out_of_range");
    }
    SECTION("kind not allowed in the slot")
    {
        auto c = default_config(t);
        c.selections["roughing"] = "turbomolecular_pump";
        const auto r = validate_config(t, c);
        REQUIRE(r.size() == 1);
        CHECK(r[0].slot == "roughing");
        CHECK(r[0].reason == "kind_not_allowed");
    }
    SECTION("missing, unknown and non-finite values")
    {
        auto c = default_config(t);
        c.selections.erase("valve");
        c.param_values["roughing"].erase("speed");
        c.param_values["surface"]["temperature"] = 1;
        c.param_values["high_vacuum"]["ultimate_pressure"] = std::nan("");
        c.selections["loadlock"] = "rotary_pump";
        const auto r = validate_config(t, c);
        std::set<std::tuple<std::string, std::string, std::string>> got;
        for (const auto& v : r)
            got.insert({v.slot, v.param, v.reason});
        CHECK(got == std::set<std::tuple<std::string, std::string, std::string>>{
                         {"valve", "", "missing_selection"},
                         {"roughing", "speed", "missing_param"},
                         {"surface", "temperature", "unknown_param"},
                         {"high_vacuum", "ultimate_pressure", "not_finite"},
                         {"loadlock", "", "unknown_slot"}});
    }
    SECTION("integer parameters")
    {
        const auto& p = builtin("pfn_modulator");
        auto c = default_config(p);
        c.param_values["pfn"]["n_sections"] = 2.5;
        const auto r = validate_config(p, c);
        REQUIRE(r.size() == 1);
        CHECK(r[0].reason == "not_integer");
        CHECK(r[0].param == "n_sections");
    }
    SECTION("sim directives")
    {
        auto c = default_config(t);
        c.n_samples = 1;
        c.step = 0.1;
        const auto r = validate_config(t, c);
        REQUIRE(r.size() == 2);
        CHECK(r[0].slot == "sim");
        CHECK(r[0].param == "n_samples");
        CHECK(r[1].reason == "not_applicable");
    }
    SECTION("template mismatch")
    {
        auto c = default_config(t);
        c.template_id = "pfn_modulator";
        CHECK_THROWS_AS(validate_config(t, c), ConfigError);
    }
    SECTION("instantiate refuses invalid configs")
    {
        auto c = default_config(t);
        c.param_values["valve"]["conductance"] = 0.0;
        try {
            instantiate(t, c);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            REQUIRE(e.report().size() == 1);
            CHECK(e.report()[0].param == "conductance");
        }
    }
}

TEST_CASE("every violation names exactly one slot or parameter", "[scheme][property]")
{
    std::mt19937_64 rng(11);
    for (const auto& t : builtin_templates()) {
        for (int trial = 0; trial < 200; ++trial) {
            auto c = random_config(t, rng);
            // push one parameter of every slot out of range
            for (auto& [slot, values] : c.param_values)
                for (auto& [name, v] : values)
                    if (rng() % 2) {
                        const auto* spec = t.find_slot(slot);
                        for (const auto& p : spec->params_for(c.selections.at(slot)))
                            if (p.name == name)
                                v = p.max + (std::abs(p.max) + 1.0);
                        break;
                    }
            const auto r = validate_config(t, c);
            std::set<std::pair<std::string, std::string>> seen;
            for (const auto& v : r) {
                CHECK_FALSE(v.slot.empty());
                CHECK(v.reason == "out_of_range");
                CHECK_FALSE(v.param.empty());
                CHECK(seen.insert({v.slot, v.param}).second);
            }
        }
    }
}

TEST_CASE("config documents", "[scheme]")
{
    const auto& t = builtin("pfn_modulator");
    auto c = default_config(t);
    c.duration = 2e-6;
    c.n_samples = 501;
    const auto back = config_from_json(json::parse(config_to_json(c).dump()));
    CHECK(back == c);
    auto doc = config_to_json(c);
    doc["owner"] = "me";
    CHECK_THROWS_AS(config_from_json(doc), ConfigError);
    doc = config_to_json(c);
    doc["param_values"]["pfn"]["n_sections"] = "five";
    CHECK_THROWS_AS(config_from_json(doc), ConfigError);
    doc = config_to_json(c);
    doc["sim_directives"]["n_samples"] = -3;
    CHECK_THROWS_AS(config_from_json(doc), ConfigError);
    const auto r = report_to_json({{"pfn", "n_sections", "out_of_range", "too many"}});
    CHECK(r[0]["slot"] == "pfn");
    CHECK(r[0]["param"] == "n_sections");
    CHECK(r[0]["reason"] == "out_of_range");
}

TEST_CASE("vacuum template instantiates a valid network", "[scheme]")
{
    const auto& t = builtin("vacuum_station");
    const auto net = std::get<vacuum::VacuumNetwork>(instantiate(t, default_config(t)));
    CHECK_NOTHROW(net.validate());
    CHECK(net.chambers.size() == 2);
    CHECK(net.pumps.size() == 2);
    REQUIRE(net.links.size() == 1);
    CHECK(net.links[0].valve_open);
    CHECK(net.chambers[1].outgassing_rate == 1e-4);

    auto c = default_config(t);
    c.selections["valve"] = "valve_closed";
    c.selections["high_vacuum"] = "no_pump";
    c.param_values["high_vacuum"].clear();
    const auto closed = std::get<vacuum::VacuumNetwork>(instantiate(t, c));
    CHECK_FALSE(closed.links[0].valve_open);
    CHECK(closed.pumps.size() == 1);
}

TEST_CASE("swapping a beam slot changes exactly that element", "[scheme]")
{
    const auto& t = builtin("transport_channel");
    auto c = default_config(t);
    c.selections["q1"] = "drift";
    c.param_values["q1"] = {{"length", 0.2}};
    const auto drift = std::get<BeamModel>(instantiate(t, c));
    c.selections["q1"] = "quadrupole";
    c.param_values["q1"] = {{"length", 0.2}, {"k", -3.0}};
    const auto quad = std::get<BeamModel>(instantiate(t, c));
    REQUIRE(drift.line.size() == quad.line.size());
    std::vector<std::size_t> diff;
    for (std::size_t i = 0; i < drift.line.size(); ++i)
        if (!(drift.line[i] == quad.line[i]))
            diff.push_back(i);
    REQUIRE(diff.size() == 1);
    CHECK(diff[0] == 2);
    CHECK(drift.line[2].kind == beam::ElementKind::Drift);
    CHECK(quad.line[2] == beam::Element::quadrupole(0.2, -3.0));
    CHECK(drift.initial == quad.initial);
}

TEST_CASE("pulse template matches the PFN builder up to node naming", "[scheme]")
{
    const auto& t = builtin("pfn_modulator");
    for (int n : {1, 3}) {
        auto c = default_config(t);
        c.param_values["pfn"] = {{"n_sections", n}, {"inductance", 2e-6}, {"capacitance", 5e-10}, {"charge_voltage", 800}};
        c.param_values["load"] = {{"resistance", 63.0}};
        const auto got = std::get<circuit::Circuit>(instantiate(t, c));
        CHECK(isomorphic(got, circuit::pfn_template(n, 2e-6, 5e-10, 63.0, 800)));
        CHECK_FALSE(isomorphic(got, circuit::pfn_template(n, 2e-6, 5e-10, 64.0, 800)));
    }
    auto c = default_config(t);
    c.selections["load"] = "rl_load";
    c.param_values["load"] = {{"resistance", 30.0}, {"inductance", 1e-7}};
    const auto rl = std::get<circuit::Circuit>(instantiate(t, c));
    CHECK(rl.element("LLOAD").value == 1e-7);
    CHECK(rl.element("RLOAD").b == rl.element("LLOAD").a);
}

TEST_CASE("instantiate and run are deterministic", "[scheme][property]")
{
    std::mt19937_64 rng(5);
    for (const auto& t : builtin_templates()) {
        for (int i = 0; i < 5; ++i) {
            const auto c = random_config(t, rng);
            CHECK(instantiate(t, c) == instantiate(t, c));
        }
        const auto c = default_config(t);
        CHECK(run_config(t, c) == run_config(t, c));
    }
}

TEST_CASE("runs return exactly the declared channels", "[scheme]")
{
    for (const auto& t : builtin_templates()) {
        const auto ts = run_config(t, default_config(t));
        REQUIRE(ts.channels().size() == t.output_channels.size());
        for (std::size_t i = 0; i < ts.channels().size(); ++i) {
            CHECK(ts.channels()[i].label == t.output_channels[i].label);
            CHECK(ts.channels()[i].unit == t.output_channels[i].unit);
        }
        CHECK_NOTHROW(ts.validate());
    }
}

TEST_CASE("run_config contracts per lab", "[scheme]")
{
    SECTION("vacuum pressures stay positive")
    {
        const auto& t = builtin("vacuum_station");
        const auto ts = run_config(t, default_config(t));
        CHECK(ts.size() == 301);
        for (const auto& ch : ts.channels())
            for (double p : ch.values)
                CHECK(p > 0.0);
    }
    SECTION("beam envelope starts at sqrt(emittance * beta0)")
    {
        const auto& t = builtin("transport_channel");
        const auto ts = run_config(t, default_config(t));
        CHECK(ts.times().front() == 0.0);
        CHECK(ts.channel("envelope_x").values.front() == Catch::Approx(std::sqrt(1e-6 * 5.0)).epsilon(1e-15));
        CHECK(ts.channel("envelope_y").values.front() == Catch::Approx(std::sqrt(1e-6 * 5.0)).epsilon(1e-15));
        CHECK(ts.times().back() == Catch::Approx(3.6).epsilon(1e-12));
    }
    SECTION("bench charges towards the source voltage")
    {
        const auto& t = builtin("measurement_bench");
        auto c = default_config(t);
        c.selections["x"] = "resistor";
        c.param_values["x"] = {{"resistance", 1.0}};
        c.duration = 2e-3;
        const auto ts = run_config(t, c);
        CHECK(sample_at(ts, "V(out)", 5e-5) == 0.0);
        // RC = 101 us after the switch closes at 0.1 ms
        const double tau = 101e-6;
        const double expected = 10.0 * (1 - std::exp(-1.0));
        CHECK(std::abs(sample_at(ts, "V(out)", 1e-4 + tau) - expected) / expected < 5e-3);
    }
    SECTION("sim directives override defaults")
    {
        const auto& t = builtin("pfn_modulator");
        auto c = default_config(t);
        c.duration = 5e-7;
        c.n_samples = 51;
        const auto ts = run_config(t, c);
        CHECK(ts.size() == 51);
        CHECK(ts.times().back() == 5e-7);
    }
}

TEST_CASE("random in-bounds configs validate and run", "[scheme][property]")
{
    std::mt19937_64 rng(2024);
    for (const auto& t : builtin_templates()) {
        for (int i = 0; i < 40; ++i) {
            const auto c = random_config(t, rng);
            INFO(config_to_json(c).dump());
            REQUIRE(validate_config(t, c).empty());
            CHECK_NOTHROW(run_config(t, c));
        }
    }
}

TEST_CASE("long pulse runs with a series load inductor stay solvable", "[scheme]")
{
    // many internal steps used to leave a rounding sliver as a final, absurdly short step
    const auto doc = json::parse(R"({"param_values":{"load":{"inductance":6.25734568436777e-06,
        "resistance":914.114656324255},"pfn":{"capacitance":1.383563247131113e-10,
        "charge_voltage":296.84497947199014,"inductance":6.440189776249486e-05,"n_sections":9.0}},
        "selections":{"load":"rl_load","pfn":"pfn_ladder"},"template_id":"pfn_modulator"})");
    const auto& t = builtin("pfn_modulator");
    const auto c = config_from_json(doc);
    REQUIRE(validate_config(t, c).empty());
    const auto ts = run_config(t, c);
    for (const auto& ch : ts.channels())
        for (double v : ch.values)
            CHECK(std::isfinite(v));
}
