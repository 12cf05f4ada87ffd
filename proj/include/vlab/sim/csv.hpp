#pragma once

#include "vlab/sim/time_series.hpp"

#include <string>

namespace vlab::sim {

/// Header `t,<label>[<unit>],...`, one row per sample, '\n' line endings,
/// shortest round-trip decimal formatting.
std::string to_csv(const TimeSeries& series);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

} // namespace vlab::sim
