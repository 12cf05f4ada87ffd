#include "vlab/scheme/instantiate.hpp"

#include "json_fields.hpp"
#include "registry.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

namespace vlab::scheme {

namespace {

using nlohmann::json;
using Fields = detail::Fields<TemplateError>;
using Params = std::map<std::string, double>;

struct KindDef {
    LabKind lab;
    const char* kind;
    std::vector<std::string> params;
};

const std::vector<KindDef>& registry()
{
    static const std::vector<KindDef> defs{
        {LabKind::Vacuum, "rotary_pump", {"speed", "ultimate_pressure"}},
        {LabKind::Vacuum, "scroll_pump", {"speed", "ultimate_pressure"}},
        {LabKind::Vacuum, "turbomolecular_pump", {"speed", "ultimate_pressure"}},
        {LabKind::Vacuum, "diffusion_pump", {"speed", "ultimate_pressure"}},
        {LabKind::Vacuum, "no_pump", {}},
        {LabKind::Vacuum, "valve_open", {"conductance"}},
        {LabKind::Vacuum, "valve_closed", {"conductance"}},
        {LabKind::Vacuum, "duct", {"conductance"}},
        {LabKind::Vacuum, "outgassing", {"outgassing_rate"}},
        {LabKind::Vacuum, "baked_surface", {"outgassing_rate"}},
        {LabKind::Vacuum, "unbaked_surface", {"outgassing_rate"}},

        {LabKind::BeamTransport, "drift", {"length"}},
        {LabKind::BeamTransport, "quadrupole", {"length", "k"}},
        {LabKind::BeamTransport, "thin_quadrupole", {"inverse_focal_length"}},
        {LabKind::BeamTransport, "sector_bend", {"length", "angle"}},

        {LabKind::Electronics, "resistor", {"resistance"}},
        {LabKind::Electronics, "capacitor", {"capacitance", "initial_voltage"}},
        {LabKind::Electronics, "inductor", {"inductance"}},
        {LabKind::Electronics, "voltage_source", {"voltage"}},
        {LabKind::Electronics, "switch", {"closed_at"}},

        {LabKind::PulsePower, "pfn_ladder", {"n_sections", "inductance", "capacitance", "charge_voltage"}},
        {LabKind::PulsePower, "resistor", {"resistance"}},
        {LabKind::PulsePower, "rl_load", {"resistance", "inductance"}},
    };
    return defs;
}

bool is_pump(const std::string& k) { return k.size() > 5 && k.compare(k.size() - 5, 5, "_pump") == 0; }
bool is_surface(const std::string& k) { return k == "outgassing" || k == "baked_surface" || k == "unbaked_surface"; }
bool is_link(const std::string& k) { return k == "valve_open" || k == "valve_closed" || k == "duct"; }

struct Resolved {
    std::string kind;
    Params params;
};

// Element entry in fixed_structure: placement keys plus either
// {"slot": id} or {"kind": k, <params of k>}.
class Entry {
public:
    Entry(const json& j, std::string where, std::vector<std::string_view> placement, LabKind lab,
          const SchemeTemplate& tpl, const SchemeConfig& config)
        : where_(std::move(where))
    {
        if (!j.is_object())
            throw TemplateError(where_ + ": expected an object");
        if (j.contains("slot")) {
            placement.push_back("slot");
            fields_.emplace(j, where_, placement);
            const auto id = fields_->str("slot");
            if (!tpl.find_slot(id))
                fields_->fail("unknown slot '" + id + "'");
            res_.kind = config.selections.at(id);
            const auto pv = config.param_values.find(id);
            if (pv != config.param_values.end())
                res_.params = pv->second;
            if (!detail::kind_params(lab, res_.kind))
                fields_->fail("slot '" + id + "' selects unknown kind '" + res_.kind + "'");
            return;
        }
        if (!j.contains("kind") || !j.at("kind").is_string())
            throw TemplateError(where_ + ": needs 'slot' or 'kind'");
        res_.kind = j.at("kind").get<std::string>();
        const auto* names = detail::kind_params(lab, res_.kind);
        if (!names)
            throw TemplateError(where_ + ": unknown kind '" + res_.kind + "'");
        placement.push_back("kind");
        for (const auto& n : *names)
            placement.push_back(n);
        fields_.emplace(j, where_, placement);
        for (const auto& n : *names)
            res_.params[n] = fields_->num(n);
    }

    const Fields& fields() const { return *fields_; }
    const std::string& kind() const { return res_.kind; }
    double param(const std::string& name) const { return res_.params.at(name); }
    [[noreturn]] void fail(const std::string& what) const { fields_->fail(what); }

private:
    std::string where_;
    std::optional<Fields> fields_;
    Resolved res_;
};

const json& member_array(const Fields& f, const char* key) { return f.array(key); }

vacuum::VacuumNetwork build_vacuum(const SchemeTemplate& tpl, const SchemeConfig& cfg)
{
    Fields top(tpl.fixed_structure, "fixed_structure", {"chambers", "pumps", "links"});
    vacuum::VacuumNetwork net;
    const auto& chambers = member_array(top, "chambers");
    for (std::size_t i = 0; i < chambers.size(); ++i) {
        Entry e(chambers[i], "chambers[" + std::to_string(i) + "]", {"id", "volume", "initial_pressure"},
                LabKind::Vacuum, tpl, cfg);
        if (!is_surface(e.kind()))
            e.fail("kind '" + e.kind() + "' cannot load a chamber");
        net.chambers.push_back({e.fields().str("id"), e.fields().num("volume"), e.fields().num("initial_pressure"),
                                e.param("outgassing_rate")});
    }
    if (top.has("pumps")) {
        const auto& pumps = member_array(top, "pumps");
        for (std::size_t i = 0; i < pumps.size(); ++i) {
            Entry e(pumps[i], "pumps[" + std::to_string(i) + "]", {"id", "chamber"}, LabKind::Vacuum, tpl, cfg);
            if (e.kind() == "no_pump")
                continue;
            if (!is_pump(e.kind()))
                e.fail("kind '" + e.kind() + "' is not a pump");
            net.pumps.push_back({e.fields().str("id"), e.fields().str("chamber"), e.param("speed"),
                                 e.param("ultimate_pressure")});
        }
    }
    if (top.has("links")) {
        const auto& links = member_array(top, "links");
        for (std::size_t i = 0; i < links.size(); ++i) {
            Entry e(links[i], "links[" + std::to_string(i) + "]", {"id", "from", "to"}, LabKind::Vacuum, tpl, cfg);
            if (!is_link(e.kind()))
                e.fail("kind '" + e.kind() + "' is not a conductance");
            net.links.push_back({e.fields().str("id"), e.fields().str("from"), e.fields().str("to"),
                                 e.param("conductance"), e.kind() != "valve_closed"});
        }
    }
    net.validate();
    return net;
}

beam::Twiss parse_twiss(const json& j, const std::string& where)
{
    Fields f(j, where, {"alpha", "beta", "emittance"});
    beam::Twiss t{f.num("alpha"), f.num("beta"), f.num("emittance")};
    t.validate();
    return t;
}

BeamModel build_beam(const SchemeTemplate& tpl, const SchemeConfig& cfg)
{
    Fields top(tpl.fixed_structure, "fixed_structure", {"initial_twiss", "elements"});
    Fields tw(top.raw("initial_twiss"), "initial_twiss", {"x", "y"});
    BeamModel m;
    m.initial = {parse_twiss(tw.raw("x"), "initial_twiss.x"), parse_twiss(tw.raw("y"), "initial_twiss.y")};
    const auto& elems = top.array("elements");
    for (std::size_t i = 0; i < elems.size(); ++i) {
        Entry e(elems[i], "elements[" + std::to_string(i) + "]", {}, LabKind::BeamTransport, tpl, cfg);
        beam::Element el;
        if (e.kind() == "drift")
            el = beam::Element::drift(e.param("length"));
        else if (e.kind() == "quadrupole")
            el = beam::Element::quadrupole(e.param("length"), e.param("k"));
        else if (e.kind() == "thin_quadrupole")
            el = {beam::ElementKind::ThinQuadrupole, 0.0, e.param("inverse_focal_length")};
        else
            el = beam::Element::sector_bend(e.param("length"), e.param("angle"));
        el.validate();
        m.line.push_back(el);
    }
    if (m.line.empty())
        throw TemplateError("fixed_structure: beamline has no elements");
    return m;
}

circuit::Element circuit_element(const Entry& e, std::string id, std::string a, std::string b)
{
    using circuit::Element;
    const auto& k = e.kind();
    if (k == "resistor")
        return Element::resistor(std::move(id), std::move(a), std::move(b), e.param("resistance"));
    if (k == "capacitor")
        return Element::capacitor(std::move(id), std::move(a), std::move(b), e.param("capacitance"),
                                  e.param("initial_voltage"));
    if (k == "inductor")
        return Element::inductor(std::move(id), std::move(a), std::move(b), e.param("inductance"));
    if (k == "voltage_source")
        return Element::voltage_source(std::move(id), std::move(a), std::move(b), e.param("voltage"));
    if (k == "switch")
        return Element::switch_(std::move(id), std::move(a), std::move(b), e.param("closed_at"));
    e.fail("kind '" + k + "' is not a bench element");
}

circuit::Circuit build_bench(const SchemeTemplate& tpl, const SchemeConfig& cfg)
{
    Fields top(tpl.fixed_structure, "fixed_structure", {"ground", "elements"});
    circuit::Circuit c;
    c.ground = top.str_or("ground", "0");
    const auto& elems = top.array("elements");
    for (std::size_t i = 0; i < elems.size(); ++i) {
        Entry e(elems[i], "elements[" + std::to_string(i) + "]", {"id", "a", "b"}, LabKind::Electronics, tpl, cfg);
        c.elements.push_back(circuit_element(e, e.fields().str("id"), e.fields().str("a"), e.fields().str("b")));
    }
    circuit::validate(c);
    return c;
}

circuit::Circuit build_pfn(const SchemeTemplate& tpl, const SchemeConfig& cfg)
{
    Fields top(tpl.fixed_structure, "fixed_structure", {"ladder", "load"});
    Entry ladder(top.raw("ladder"), "ladder", {}, LabKind::PulsePower, tpl, cfg);
    Entry load(top.raw("load"), "load", {}, LabKind::PulsePower, tpl, cfg);
    if (ladder.kind() != "pfn_ladder")
        ladder.fail("kind '" + ladder.kind() + "' is not a ladder");
    const double n = ladder.param("n_sections");
    if (!(n >= 1.0) || std::floor(n) != n || n > 1000.0)
        ladder.fail("n_sections must be a whole number in [1, 1000]");
    if (load.kind() != "resistor" && load.kind() != "rl_load")
        load.fail("kind '" + load.kind() + "' is not a load");

    auto c = circuit::pfn_template(static_cast<int>(n), ladder.param("inductance"), ladder.param("capacitance"),
                                   load.param("resistance"), ladder.param("charge_voltage"));
    if (load.kind() == "rl_load") {
        auto& r = std::find_if(c.elements.begin(), c.elements.end(), [](const auto& e) { return e.id == "RLOAD"; })
                      ->b;
        r = "lmid";
        c.elements.push_back(circuit::Element::inductor("LLOAD", "lmid", c.ground, load.param("inductance")));
    }
    circuit::validate(c);
    return c;
}

void collect_slots(const json& j, std::multiset<std::string>& out)
{
    if (j.is_object()) {
        for (const auto& [key, v] : j.items()) {
            if (key == "slot" && v.is_string())
                out.insert(v.get<std::string>());
            else
                collect_slots(v, out);
        }
    } else if (j.is_array()) {
        for (const auto& v : j)
            collect_slots(v, out);
    }
}

} // namespace

namespace detail {

const std::vector<std::string>* kind_params(LabKind lab, const std::string& kind)
{
    for (const auto& d : registry())
        if (d.lab == lab && kind == d.kind)
            return &d.params;
    return nullptr;
}

std::multiset<std::string> referenced_slots(const json& fixed_structure)
{
    std::multiset<std::string> out;
    collect_slots(fixed_structure, out);
    return out;
}

} // namespace detail

namespace {

std::string summarize(const ValidationReport& report)
{
    std::string s = "invalid config:";
    for (const auto& v : report)
        s += " [" + v.slot + (v.param.empty() ? "" : "." + v.param) + ": " + v.reason + "]";
    return s;
}

} // namespace

ValidationError::ValidationError(ValidationReport report)
    : std::runtime_error(summarize(report)), report_(std::move(report))
{
}

LabModel instantiate(const SchemeTemplate& tpl, const SchemeConfig& config)
{
    auto report = validate_config(tpl, config);
    if (!report.empty())
        throw ValidationError(std::move(report));
    switch (tpl.lab_kind) {
    case LabKind::Vacuum: return build_vacuum(tpl, config);
    case LabKind::BeamTransport: return build_beam(tpl, config);
    case LabKind::Electronics: return build_bench(tpl, config);
    case LabKind::PulsePower: return build_pfn(tpl, config);
    }
    throw TemplateError("unknown lab kind");
}

std::vector<ChannelSpec> available_channels(const SchemeTemplate&, const LabModel& model)
{
    std::vector<ChannelSpec> out;
    if (const auto* net = std::get_if<vacuum::VacuumNetwork>(&model)) {
        for (const auto& c : net->chambers)
            out.push_back({c.id, "Pa"});
    } else if (std::holds_alternative<BeamModel>(model)) {
        for (const char* l : {"beta_x", "beta_y", "envelope_x", "envelope_y"})
            out.push_back({l, "m"});
    } else {
        const auto& c = std::get<circuit::Circuit>(model);
        for (const auto& n : c.nodes())
            out.push_back({"V(" + n + ")", "V"});
        for (const auto& e : c.elements)
            out.push_back({"I(" + e.id + ")", "A"});
    }
    return out;
}

sim::TimeSeries run_config(const SchemeTemplate& tpl, const SchemeConfig& config, const RunSettings& settings)
{
    const auto model = instantiate(tpl, config);
    const auto d = effective_directives(tpl, config);
    sim::TimeSeries full;
    if (const auto* net = std::get_if<vacuum::VacuumNetwork>(&model)) {
        full = vacuum::pumpdown(*net, d.duration, d.n_samples, settings.solver);
    } else if (const auto* bm = std::get_if<BeamModel>(&model)) {
        full = beam::envelope(bm->line, bm->initial, d.step);
    } else {
        circuit::TransientOptions opt;
        opt.all_currents = true;
        full = circuit::transient(std::get<circuit::Circuit>(model), d.duration, d.n_samples, opt);
    }
    std::vector<std::string> labels;
    for (const auto& c : tpl.output_channels)
        labels.push_back(c.label);
    return full.select(labels);
}

} // namespace vlab::scheme
