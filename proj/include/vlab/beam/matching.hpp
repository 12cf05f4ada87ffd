#pragma once

#include "vlab/beam/nelder_mead.hpp"
#include "vlab/beam/optics.hpp"

#include <cstddef>
#include <vector>

namespace vlab::beam {

struct MatchResult {
    /// Strengths of the tunable elements, in the order they were given.
    std::vector<double> strengths;
    double residual = 0.0;
    std::size_t iterations = 0;
    std::size_t restarts = 0;
    /// The input line with the matched strengths applied.
    Beamline line;
};

/// Mismatch at the line exit: sum over planes of
/// (alpha - alpha*)^2 + ((beta - beta*) / beta*)^2.
double matching_residual(const Beamline& line, const BeamTwiss& tw0, const BeamTwiss& target);

/// Tunes the quadrupoles at `tunable` so the exit Twiss approaches `target`.
///
/// Derivative-free simplex search seeded from the current strengths, capped at
/// 2000 iterations with restarts on stagnation. Deterministic. Throws
/// OpticsError when the tunable list is empty, longer than six, or names an
/// index that is not a quadrupole.
MatchResult match_quadrupoles(const Beamline& line, const std::vector<std::size_t>& tunable,
                              const BeamTwiss& tw0, const BeamTwiss& target,
                              const NelderMeadOptions& options = {});

} // namespace vlab::beam
