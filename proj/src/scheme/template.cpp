#include "vlab/scheme/template.hpp"

#include "json_fields.hpp"
#include "registry.hpp"
#include "vlab/scheme/config.hpp"
#include "vlab/scheme/instantiate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace vlab::scheme {

namespace {

using nlohmann::json;
using Fields = detail::Fields<TemplateError>;

constexpr std::size_t max_samples = 100000;

bool whole(double v) { return std::floor(v) == v; }

ParamSpec parse_param(const json& j, const std::string& where)
{
    Fields f(j, where, {"name", "unit", "min", "max", "default", "scale", "integer"});
    ParamSpec p;
    p.name = f.str("name");
    p.unit = f.str("unit");
    p.min = f.num("min");
    p.max = f.num("max");
    p.default_value = f.num("default");
    const auto scale = f.str_or("scale", "linear");
    if (scale == "linear")
        p.scale = Scale::Linear;
    else if (scale == "log")
        p.scale = Scale::Log;
    else
        f.fail("scale must be 'linear' or 'log'");
    p.integer = f.has("integer") && f.boolean("integer");
    return p;
}

json param_to_json(const ParamSpec& p)
{
    json j{{"name", p.name},
           {"unit", p.unit},
           {"min", p.min},
           {"max", p.max},
           {"default", p.default_value},
           {"scale", p.scale == Scale::Log ? "log" : "linear"}};
    if (p.integer)
        j["integer"] = true;
    return j;
}

std::vector<std::string> string_list(const json& arr, const Fields& f, const std::string& key)
{
    std::vector<std::string> out;
    for (const auto& v : arr) {
        if (!v.is_string())
            f.fail(key + " entries must be strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

Slot parse_slot(const json& j, std::size_t index)
{
    Fields f(j, "slots[" + std::to_string(index) + "]",
             {"slot_id", "position", "allowed_kinds", "default_kind", "params"});
    Slot s;
    s.slot_id = f.str("slot_id");
    if (f.has("position")) {
        const auto& pos = f.array("position");
        if (pos.size() != 2 || !pos[0].is_number_integer() || !pos[1].is_number_integer())
            f.fail("position must be two integers");
        s.position = {pos[0].get<int>(), pos[1].get<int>()};
    }
    s.allowed_kinds = string_list(f.array("allowed_kinds"), f, "allowed_kinds");
    s.default_kind = f.str("default_kind");
    if (f.has("params")) {
        const auto& params = f.raw("params");
        if (!params.is_object())
            f.fail("params must map kind to a list of parameters");
        for (const auto& [kind, list] : params.items()) {
            if (!list.is_array())
                f.fail("params of kind '" + kind + "' must be a list");
            auto& specs = s.params[kind];
            for (std::size_t i = 0; i < list.size(); ++i)
                specs.push_back(parse_param(list[i], "slot '" + s.slot_id + "' kind '" + kind + "' param " +
                                                         std::to_string(i)));
        }
    }
    for (const auto& k : s.allowed_kinds)
        s.params.try_emplace(k);
    return s;
}

SimDirectives parse_directives(const json& j)
{
    Fields f(j, "sim_defaults", {"duration", "n_samples", "step"});
    SimDirectives d;
    if (f.has("duration"))
        d.duration = f.num("duration");
    if (f.has("n_samples")) {
        const auto& v = f.raw("n_samples");
        if (!v.is_number_unsigned())
            f.fail("n_samples must be a non-negative integer");
        d.n_samples = v.get<std::size_t>();
    }
    if (f.has("step"))
        d.step = f.num("step");
    return d;
}

void check_param(const ParamSpec& p, const std::string& where)
{
    auto fail = [&](const std::string& what) { throw TemplateError(where + " param '" + p.name + "': " + what); };
    if (p.name.empty())
        fail("empty name");
    if (!(p.min < p.max))
        fail("min must be below max");
    if (p.default_value < p.min || p.default_value > p.max)
        fail("default outside [min, max]");
    if (p.scale == Scale::Log && !(p.min > 0.0))
        fail("log scale needs min > 0");
    if (p.integer && !(whole(p.min) && whole(p.max) && whole(p.default_value)))
        fail("integer parameter with fractional bounds or default");
}

} // namespace

std::string to_string(LabKind kind)
{
    switch (kind) {
    case LabKind::Vacuum: return "vacuum";
    case LabKind::BeamTransport: return "beam_transport";
    case LabKind::Electronics: return "electronics";
    case LabKind::PulsePower: return "pulse_power";
    }
    return "?";
}

LabKind lab_kind_from_string(const std::string& s)
{
    for (auto k : {LabKind::Vacuum, LabKind::BeamTransport, LabKind::Electronics, LabKind::PulsePower})
        if (to_string(k) == s)
            return k;
    throw TemplateError("unknown lab_kind '" + s + "'");
}

const std::vector<ParamSpec>& Slot::params_for(const std::string& kind) const
{
    static const std::vector<ParamSpec> none;
    const auto it = params.find(kind);
    return it == params.end() ? none : it->second;
}

bool Slot::allows(const std::string& kind) const
{
    return std::find(allowed_kinds.begin(), allowed_kinds.end(), kind) != allowed_kinds.end();
}

const Slot* SchemeTemplate::find_slot(const std::string& id) const
{
    for (const auto& s : slots)
        if (s.slot_id == id)
            return &s;
    return nullptr;
}

const std::vector<std::string>& discipline_directions()
{
    static const std::vector<std::string> tags{"accelerators", "microwave_engineering", "physical_electronics",
                                               "accelerator_electronics", "accelerator_information_systems"};
    return tags;
}

SchemeTemplate template_from_json(const json& doc)
{
    Fields f(doc, "template",
             {"template_id", "lab_kind", "title", "description", "discipline_tags", "slots", "fixed_structure",
              "output_channels", "sim_defaults"});
    SchemeTemplate t;
    t.template_id = f.str("template_id");
    t.lab_kind = lab_kind_from_string(f.str("lab_kind"));
    t.title = f.str("title");
    t.description = f.str_or("description", "");
    if (f.has("discipline_tags"))
        t.discipline_tags = string_list(f.array("discipline_tags"), f, "discipline_tags");
    const auto& slots = f.array("slots");
    for (std::size_t i = 0; i < slots.size(); ++i)
        t.slots.push_back(parse_slot(slots[i], i));
    t.fixed_structure = f.raw("fixed_structure");
    const auto& channels = f.array("output_channels");
    for (std::size_t i = 0; i < channels.size(); ++i) {
        Fields c(channels[i], "output_channels[" + std::to_string(i) + "]", {"label", "unit"});
        t.output_channels.push_back({c.str("label"), c.str("unit")});
    }
    if (f.has("sim_defaults"))
        t.sim_defaults = parse_directives(f.raw("sim_defaults"));
    check_template(t);
    return t;
}

json template_to_json(const SchemeTemplate& t)
{
    json slots = json::array();
    for (const auto& s : t.slots) {
        json params = json::object();
        for (const auto& [kind, specs] : s.params) {
            json list = json::array();
            for (const auto& p : specs)
                list.push_back(param_to_json(p));
            params[kind] = std::move(list);
        }
        slots.push_back({{"slot_id", s.slot_id},
                         {"position", {s.position[0], s.position[1]}},
                         {"allowed_kinds", s.allowed_kinds},
                         {"default_kind", s.default_kind},
                         {"params", std::move(params)}});
    }
    json channels = json::array();
    for (const auto& c : t.output_channels)
        channels.push_back({{"label", c.label}, {"unit", c.unit}});
    json sim = json::object();
    if (t.sim_defaults.duration > 0)
        sim["duration"] = t.sim_defaults.duration;
    if (t.sim_defaults.n_samples > 0)
        sim["n_samples"] = t.sim_defaults.n_samples;
    if (t.sim_defaults.step > 0)
        sim["step"] = t.sim_defaults.step;
    return {{"template_id", t.template_id},
            {"lab_kind", to_string(t.lab_kind)},
            {"title", t.title},
            {"description", t.description},
            {"discipline_tags", t.discipline_tags},
            {"slots", std::move(slots)},
            {"fixed_structure", t.fixed_structure},
            {"output_channels", std::move(channels)},
            {"sim_defaults", std::move(sim)}};
}

void check_template(const SchemeTemplate& t)
{
    const std::string where = "template '" + t.template_id + "'";
    auto fail = [&](const std::string& what) { throw TemplateError(where + ": " + what); };
    if (t.template_id.empty())
        throw TemplateError("template_id must not be empty");
    for (const auto& tag : t.discipline_tags) {
        const auto& known = discipline_directions();
        if (std::find(known.begin(), known.end(), tag) == known.end())
            fail("unknown discipline tag '" + tag + "'");
    }

    std::set<std::string> ids;
    for (const auto& s : t.slots) {
        const std::string sw = where + " slot '" + s.slot_id + "'";
        if (s.slot_id.empty() || s.slot_id == "sim")
            fail("invalid slot id '" + s.slot_id + "'");
        if (!ids.insert(s.slot_id).second)
            fail("duplicate slot id '" + s.slot_id + "'");
        if (s.allowed_kinds.empty())
            throw TemplateError(sw + ": allowed_kinds is empty");
        if (!s.allows(s.default_kind))
            throw TemplateError(sw + ": default_kind not in allowed_kinds");
        if (std::set<std::string>(s.allowed_kinds.begin(), s.allowed_kinds.end()).size() != s.allowed_kinds.size())
            throw TemplateError(sw + ": duplicate allowed kind");
        for (const auto& [kind, specs] : s.params) {
            if (!s.allows(kind))
                throw TemplateError(sw + ": params given for kind '" + kind + "' that is not allowed");
            const auto* expected = detail::kind_params(t.lab_kind, kind);
            if (!expected)
                throw TemplateError(sw + ": kind '" + kind + "' is not a " + to_string(t.lab_kind) + " element");
            std::set<std::string> names;
            for (const auto& p : specs) {
                check_param(p, sw + " kind '" + kind + "'");
                if (!names.insert(p.name).second)
                    throw TemplateError(sw + ": duplicate param '" + p.name + "'");
            }
            if (names != std::set<std::string>(expected->begin(), expected->end())) {
                std::string list;
                for (const auto& n : *expected)
                    list += (list.empty() ? "" : ", ") + n;
                throw TemplateError(sw + ": kind '" + kind + "' takes parameters {" + list + "}");
            }
        }
    }

    const auto refs = detail::referenced_slots(t.fixed_structure);
    for (const auto& id : ids)
        if (refs.count(id) != 1)
            fail("slot '" + id + "' must be placed exactly once in fixed_structure");
    for (const auto& r : refs)
        if (!ids.count(r))
            fail("fixed_structure references unknown slot '" + r + "'");

    const auto& d = t.sim_defaults;
    if (t.lab_kind == LabKind::BeamTransport) {
        if (!(d.step > 0.0))
            fail("sim_defaults.step must be > 0");
    } else if (!(d.duration > 0.0) || d.n_samples < 2 || d.n_samples > max_samples) {
        fail("sim_defaults needs duration > 0 and 2 <= n_samples <= " + std::to_string(max_samples));
    }

    if (t.output_channels.empty())
        fail("output_channels is empty");
    std::set<std::string> labels;
    for (const auto& c : t.output_channels)
        if (!labels.insert(c.label).second)
            fail("duplicate output channel '" + c.label + "'");

    LabModel model;
    auto trial = [&](const SchemeConfig& c, const std::string& what) {
        try {
            return instantiate(t, c);
        } catch (const TemplateError&) {
            throw;
        } catch (const std::exception& e) {
            throw TemplateError(where + ": " + what + " does not instantiate: " + e.what());
        }
    };
    model = trial(default_config(t), "default config");
    // every allowed kind must fit its placement
    for (const auto& s : t.slots)
        for (const auto& kind : s.allowed_kinds) {
            auto c = default_config(t);
            c.selections[s.slot_id] = kind;
            auto& values = c.param_values[s.slot_id];
            values.clear();
            for (const auto& p : s.params_for(kind))
                values[p.name] = p.default_value;
            trial(c, "kind '" + kind + "' in slot '" + s.slot_id + "'");
        }
    const auto avail = available_channels(t, model);
    for (const auto& c : t.output_channels) {
        const auto it = std::find_if(avail.begin(), avail.end(), [&](const auto& a) { return a.label == c.label; });
        if (it == avail.end())
            fail("output channel '" + c.label + "' is not produced by this lab");
        if (it->unit != c.unit)
            fail("output channel '" + c.label + "' has unit " + it->unit + ", not " + c.unit);
    }
}

SchemeTemplate load_template_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw TemplateError("cannot read template file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    json doc;
    try {
        doc = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw TemplateError(path.string() + ": " + e.what());
    }
    return template_from_json(doc);
}

std::vector<SchemeTemplate> load_template_dir(const std::filesystem::path& dir)
{
    std::vector<SchemeTemplate> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            out.push_back(load_template_file(entry.path()));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.template_id < b.template_id; });
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].template_id == out[i - 1].template_id)
            throw TemplateError("duplicate template id '" + out[i].template_id + "' in " + dir.string());
    return out;
}

const std::vector<SchemeTemplate>& builtin_templates()
{
    static const std::vector<SchemeTemplate> all = [] {
        std::vector<SchemeTemplate> v;
        for (const auto& src : builtin_template_sources())
            v.push_back(template_from_json(json::parse(src)));
        return v;
    }();
    return all;
}

} // namespace vlab::scheme
