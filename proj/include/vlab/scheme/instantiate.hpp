#pragma once

#include "vlab/beam/optics.hpp"
#include "vlab/circuit/circuit.hpp"
#include "vlab/scheme/config.hpp"
#include "vlab/sim/ode.hpp"
#include "vlab/vacuum/network.hpp"

#include <variant>

namespace vlab::scheme {

struct BeamModel {
    beam::Beamline line;
    beam::BeamTwiss initial;

    bool operator==(const BeamModel&) const = default;
};

using LabModel = std::variant<vacuum::VacuumNetwork, BeamModel, circuit::Circuit>;

/// Thrown for invalid configs; carries the report.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(ValidationReport report);
    const ValidationReport& report() const { return report_; }

private:
    ValidationReport report_;
};

/// Pure mapping from a valid config to the lab model.
LabModel instantiate(const SchemeTemplate& tpl, const SchemeConfig& config);

struct RunSettings {
    sim::SolverSettings solver;
};

/// Runs the lab simulation and returns exactly the template's output
/// channels, in declared order.
sim::TimeSeries run_config(const SchemeTemplate& tpl, const SchemeConfig& config,
                           const RunSettings& settings = {});

/// Channel labels (and units) a model of this template can produce.
std::vector<ChannelSpec> available_channels(const SchemeTemplate& tpl, const LabModel& model);

} // namespace vlab::scheme
