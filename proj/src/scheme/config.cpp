#include "vlab/scheme/config.hpp"

#include "json_fields.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vlab::scheme {

namespace {

using nlohmann::json;
using Fields = detail::Fields<ConfigError>;

constexpr double max_duration = 1e9;
constexpr std::size_t min_samples = 2, max_samples = 100000;
constexpr double min_step = 1e-4, max_step = 100.0;

std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

ValidationReport validate_config(const SchemeTemplate& tpl, const SchemeConfig& config)
{
    if (config.template_id != tpl.template_id)
        throw ConfigError("config targets template '" + config.template_id + "', not '" + tpl.template_id + "'");

    ValidationReport report;
    auto add = [&](std::string slot, std::string param, std::string reason, std::string message) {
        report.push_back({std::move(slot), std::move(param), std::move(reason), std::move(message)});
    };

    for (const auto& [slot_id, kind] : config.selections)
        if (!tpl.find_slot(slot_id))
            add(slot_id, "", "unknown_slot", "template has no slot '" + slot_id + "'");
    for (const auto& [slot_id, values] : config.param_values)
        if (!tpl.find_slot(slot_id))
            add(slot_id, "", "unknown_slot", "template has no slot '" + slot_id + "'");

    for (const auto& slot : tpl.slots) {
        const auto sel = config.selections.find(slot.slot_id);
        if (sel == config.selections.end()) {
            add(slot.slot_id, "", "missing_selection", "slot '" + slot.slot_id + "' has no selected kind");
            continue;
        }
        if (!slot.allows(sel->second)) {
            add(slot.slot_id, "", "kind_not_allowed",
                "kind '" + sel->second + "' is not allowed in slot '" + slot.slot_id + "'");
            continue;
        }
        static const std::map<std::string, double> no_values;
        const auto pv = config.param_values.find(slot.slot_id);
        const auto& values = pv == config.param_values.end() ? no_values : pv->second;
        const auto& specs = slot.params_for(sel->second);
        for (const auto& [name, v] : values) {
            const bool known = std::any_of(specs.begin(), specs.end(), [&](const auto& p) { return p.name == name; });
            if (!known)
                add(slot.slot_id, name, "unknown_param",
                    "kind '" + sel->second + "' has no parameter '" + name + "'");
        }
        for (const auto& p : specs) {
            const auto it = values.find(p.name);
            if (it == values.end()) {
                add(slot.slot_id, p.name, "missing_param", "parameter '" + p.name + "' has no value");
                continue;
            }
            const double v = it->second;
            if (!std::isfinite(v))
                add(slot.slot_id, p.name, "not_finite", "parameter '" + p.name + "' must be finite");
            else if (v < p.min || v > p.max)
                add(slot.slot_id, p.name, "out_of_range",
                    "parameter '" + p.name + "' = " + fmt(v) + " outside [" + fmt(p.min) + ", " + fmt(p.max) + "]");
            else if (p.integer && std::floor(v) != v)
                add(slot.slot_id, p.name, "not_integer", "parameter '" + p.name + "' must be a whole number");
        }
    }

    const bool beam = tpl.lab_kind == LabKind::BeamTransport;
    auto not_applicable = [&](const char* name) {
        add("sim", name, "not_applicable", std::string(name) + " does not apply to this lab");
    };
    if (config.duration) {
        if (beam)
            not_applicable("duration");
        else if (!std::isfinite(*config.duration))
            add("sim", "duration", "not_finite", "duration must be finite");
        else if (!(*config.duration > 0.0) || *config.duration > max_duration)
            add("sim", "duration", "out_of_range", "duration must be in (0, " + fmt(max_duration) + "]");
    }
    if (config.n_samples) {
        if (beam)
            not_applicable("n_samples");
        else if (*config.n_samples < min_samples || *config.n_samples > max_samples)
            add("sim", "n_samples", "out_of_range",
                "n_samples must be in [" + std::to_string(min_samples) + ", " + std::to_string(max_samples) + "]");
    }
    if (config.step) {
        if (!beam)
            not_applicable("step");
        else if (!std::isfinite(*config.step))
            add("sim", "step", "not_finite", "step must be finite");
        else if (*config.step < min_step || *config.step > max_step)
            add("sim", "step", "out_of_range", "step must be in [" + fmt(min_step) + ", " + fmt(max_step) + "]");
    }
    return report;
}

SchemeConfig default_config(const SchemeTemplate& tpl)
{
    SchemeConfig c;
    c.template_id = tpl.template_id;
    for (const auto& slot : tpl.slots) {
        c.selections[slot.slot_id] = slot.default_kind;
        auto& values = c.param_values[slot.slot_id];
        for (const auto& p : slot.params_for(slot.default_kind))
            values[p.name] = p.default_value;
    }
    return c;
}

SchemeConfig random_config(const SchemeTemplate& tpl, std::mt19937_64& rng)
{
    SchemeConfig c;
    c.template_id = tpl.template_id;
    for (const auto& slot : tpl.slots) {
        std::uniform_int_distribution<std::size_t> pick(0, slot.allowed_kinds.size() - 1);
        const auto& kind = slot.allowed_kinds[pick(rng)];
        c.selections[slot.slot_id] = kind;
        auto& values = c.param_values[slot.slot_id];
        for (const auto& p : slot.params_for(kind)) {
            double v;
            if (p.integer) {
                std::uniform_int_distribution<long long> u(static_cast<long long>(p.min),
                                                           static_cast<long long>(p.max));
                v = static_cast<double>(u(rng));
            } else if (p.scale == Scale::Log) {
                std::uniform_real_distribution<double> u(std::log(p.min), std::log(p.max));
                v = std::exp(u(rng));
            } else {
                std::uniform_real_distribution<double> u(p.min, p.max);
                v = u(rng);
            }
            values[p.name] = std::clamp(v, p.min, p.max);
        }
    }
    return c;
}

SimDirectives effective_directives(const SchemeTemplate& tpl, const SchemeConfig& config)
{
    SimDirectives d = tpl.sim_defaults;
    if (config.duration)
        d.duration = *config.duration;
    if (config.n_samples)
        d.n_samples = *config.n_samples;
    if (config.step)
        d.step = *config.step;
    return d;
}

SchemeConfig config_from_json(const json& doc)
{
    Fields f(doc, "config", {"template_id", "selections", "param_values", "sim_directives"});
    SchemeConfig c;
    c.template_id = f.str("template_id");
    if (f.has("selections")) {
        const auto& sel = f.raw("selections");
        if (!sel.is_object())
            f.fail("selections must map slot id to kind");
        for (const auto& [slot, kind] : sel.items()) {
            if (!kind.is_string())
                f.fail("selection for slot '" + slot + "' must be a string");
            c.selections[slot] = kind.get<std::string>();
        }
    }
    if (f.has("param_values")) {
        const auto& pv = f.raw("param_values");
        if (!pv.is_object())
            f.fail("param_values must map slot id to an object");
        for (const auto& [slot, values] : pv.items()) {
            if (!values.is_object())
                f.fail("param_values of slot '" + slot + "' must be an object");
            auto& dst = c.param_values[slot];
            for (const auto& [name, v] : values.items()) {
                if (!v.is_number())
                    f.fail("param_values '" + slot + "." + name + "' must be a number");
                dst[name] = v.get<double>();
            }
        }
    }
    if (f.has("sim_directives")) {
        Fields s(f.raw("sim_directives"), "sim_directives", {"duration", "n_samples", "step"});
        if (s.has("duration"))
            c.duration = s.num("duration");
        if (s.has("n_samples")) {
            const auto& v = s.raw("n_samples");
            if (!v.is_number_unsigned())
                s.fail("n_samples must be a non-negative integer");
            c.n_samples = v.get<std::size_t>();
        }
        if (s.has("step"))
            c.step = s.num("step");
    }
    return c;
}

json config_to_json(const SchemeConfig& c)
{
    json pv = json::object();
    for (const auto& [slot, values] : c.param_values) {
        json v = json::object();
        for (const auto& [name, x] : values)
            v[name] = x;
        pv[slot] = std::move(v);
    }
    json doc{{"template_id", c.template_id}, {"selections", c.selections}, {"param_values", std::move(pv)}};
    json sim = json::object();
    if (c.duration)
        sim["duration"] = *c.duration;
    if (c.n_samples)
        sim["n_samples"] = *c.n_samples;
    if (c.step)
        sim["step"] = *c.step;
    if (!sim.empty())
        doc["sim_directives"] = std::move(sim);
    return doc;
}

json report_to_json(const ValidationReport& report)
{
    json out = json::array();
    for (const auto& v : report) {
        json j{{"slot", v.slot}, {"reason", v.reason}, {"message", v.message}};
        if (!v.param.empty())
            j["param"] = v.param;
        out.push_back(std::move(j));
    }
    return out;
}

} // namespace vlab::scheme
