#pragma once

#include "vlab/scheme/template.hpp"

#include <set>
#include <string>
#include <vector>

namespace vlab::scheme::detail {

/// Parameter names a lab element kind takes, or nullptr if the kind is not
/// known for that lab.
const std::vector<std::string>* kind_params(LabKind lab, const std::string& kind);

/// Slot ids referenced from fixed_structure, with multiplicity.
std::multiset<std::string> referenced_slots(const nlohmann::json& fixed_structure);

} // namespace vlab::scheme::detail
