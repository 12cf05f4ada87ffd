#include "vlab/beam/matching.hpp"

#include <cmath>
#include <set>
#include <string>

namespace vlab::beam {

double matching_residual(const Beamline& line, const BeamTwiss& tw0, const BeamTwiss& target)
{
    const auto exit = transport(line, tw0);
    double r = 0.0;
    for (auto plane : {Plane::X, Plane::Y}) {
        const auto& got = exit.plane(plane);
        const auto& want = target.plane(plane);
        const double da = got.alpha - want.alpha;
        const double db = (got.beta - want.beta) / want.beta;
        r += da * da + db * db;
    }
    return r;
}

MatchResult match_quadrupoles(const Beamline& line, const std::vector<std::size_t>& tunable,
                              const BeamTwiss& tw0, const BeamTwiss& target,
                              const NelderMeadOptions& options)
{
    if (tunable.empty())
        throw OpticsError("matching needs at least one tunable quadrupole");
    if (tunable.size() > 6)
        throw OpticsError("matching supports at most six tunable quadrupoles");
    std::set<std::size_t> seen;
    for (auto idx : tunable) {
        if (idx >= line.size() || !line[idx].is_quadrupole())
            throw OpticsError("no quadrupole at tunable index " + std::to_string(idx));
        if (!seen.insert(idx).second)
            throw OpticsError("tunable index " + std::to_string(idx) + " listed twice");
    }
    for (const auto& e : line)
        e.validate();
    tw0.x.validate();
    tw0.y.validate();
    target.x.validate();
    target.y.validate();

    std::vector<double> x0;
    for (auto idx : tunable)
        x0.push_back(line[idx].strength);

    Beamline work = line;
    auto objective = [&](std::span<const double> k) {
        for (std::size_t i = 0; i < tunable.size(); ++i)
            work[tunable[i]].strength = k[i];
        return matching_residual(work, tw0, target);
    };
    const auto nm = nelder_mead(objective, x0, options);

    MatchResult out;
    out.strengths = nm.x;
    out.residual = nm.f;
    out.iterations = nm.iterations;
    out.restarts = nm.restarts;
    out.line = line;
    for (std::size_t i = 0; i < tunable.size(); ++i)
        out.line[tunable[i]].strength = nm.x[i];
    return out;
}

} // namespace vlab::beam
