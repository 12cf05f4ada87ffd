#pragma once

#include "vlab/scheme/template.hpp"

#include <optional>
#include <random>

namespace vlab::scheme {

struct SchemeConfig {
    std::string template_id;
    std::map<std::string, std::string> selections;
    std::map<std::string, std::map<std::string, double>> param_values;
    /// Overrides of the template's sim_defaults.
    std::optional<double> duration;
    std::optional<std::size_t> n_samples;
    std::optional<double> step;

    bool operator==(const SchemeConfig&) const = default;
};

/// One violation names a slot (or "sim" for directives) and, when relevant,
/// a parameter.
struct Violation {
    std::string slot;
    std::string param;
    /// Machine-readable code: unknown_slot, missing_selection,
    /// kind_not_allowed, missing_param, unknown_param, out_of_range,
    /// not_integer, not_finite, not_applicable.
    std::string reason;
    std::string message;

    bool operator==(const Violation&) const = default;
};

using ValidationReport = std::vector<Violation>;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws ConfigError when the config names another template.
ValidationReport validate_config(const SchemeTemplate& tpl, const SchemeConfig& config);

SchemeConfig default_config(const SchemeTemplate& tpl);

/// Uniform kind choice, parameters uniform (log-uniform on log scale)
/// within bounds.
SchemeConfig random_config(const SchemeTemplate& tpl, std::mt19937_64& rng);

/// Directives after applying config overrides to template defaults.
SimDirectives effective_directives(const SchemeTemplate& tpl, const SchemeConfig& config);

/// Throws ConfigError on malformed documents or unknown keys.
SchemeConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const SchemeConfig& config);
nlohmann::json report_to_json(const ValidationReport& report);

} // namespace vlab::scheme
