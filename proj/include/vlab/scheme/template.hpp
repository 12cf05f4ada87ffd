#pragma once

#include <json.hpp>

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

// Fixed-topology scheme templates. A template is a JSON document; the lab
// topology lives in `fixed_structure` and refers to slots by id where the
// student may choose among allowed element kinds.
namespace vlab::scheme {

enum class LabKind { Vacuum, BeamTransport, Electronics, PulsePower };

std::string to_string(LabKind kind);
LabKind lab_kind_from_string(const std::string& s);

enum class Scale { Linear, Log };

struct ParamSpec {
    std::string name;
    std::string unit;
    double min = 0.0;
    double max = 1.0;
    double default_value = 0.0;
    Scale scale = Scale::Linear;
    /// Value must be a whole number (section counts and the like).
    bool integer = false;

    bool operator==(const ParamSpec&) const = default;
};

struct Slot {
    std::string slot_id;
    /// Grid column and row, presentation only.
    std::array<int, 2> position{0, 0};
    std::vector<std::string> allowed_kinds;
    std::string default_kind;
    std::map<std::string, std::vector<ParamSpec>> params;

    const std::vector<ParamSpec>& params_for(const std::string& kind) const;
    bool allows(const std::string& kind) const;

    bool operator==(const Slot&) const = default;
};

struct ChannelSpec {
    std::string label;
    std::string unit;

    bool operator==(const ChannelSpec&) const = default;
};

/// Simulation extent: duration and n_samples for time-domain labs, step (m)
/// for beam transport. Zero means not applicable.
struct SimDirectives {
    double duration = 0.0;
    std::size_t n_samples = 0;
    double step = 0.0;

    bool operator==(const SimDirectives&) const = default;
};

struct SchemeTemplate {
    std::string template_id;
    LabKind lab_kind = LabKind::Vacuum;
    std::string title;
    std::string description;
    std::vector<std::string> discipline_tags;
    std::vector<Slot> slots;
    nlohmann::json fixed_structure;
    std::vector<ChannelSpec> output_channels;
    SimDirectives sim_defaults;

    const Slot* find_slot(const std::string& id) const;

    bool operator==(const SchemeTemplate&) const = default;
};

/// Malformed template document or inconsistent template.
class TemplateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The five training directions usable as discipline tags.
const std::vector<std::string>& discipline_directions();

/// Parses and fully checks a template; throws TemplateError.
SchemeTemplate template_from_json(const nlohmann::json& doc);
nlohmann::json template_to_json(const SchemeTemplate& tpl);

SchemeTemplate load_template_file(const std::filesystem::path& path);
/// Every *.json file in `dir`, sorted by template id. Duplicate ids throw.
std::vector<SchemeTemplate> load_template_dir(const std::filesystem::path& dir);

/// Structural checks plus a trial instantiation of the defaults.
void check_template(const SchemeTemplate& tpl);

/// The four shipped templates, one per lab kind.
const std::vector<SchemeTemplate>& builtin_templates();
/// Source text of the shipped templates, in builtin_templates() order.
const std::vector<std::string>& builtin_template_sources();

} // namespace vlab::scheme
