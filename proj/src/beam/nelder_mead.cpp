#include "vlab/beam/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace vlab::beam {

namespace {

constexpr double reflect_coef = 1.0, expand_coef = 2.0, contract_coef = 0.5, shrink_coef = 0.5;

struct Vertex {
    std::vector<double> x;
    double f;
};

} // namespace

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> x0, const NelderMeadOptions& options)
{
    const std::size_t n = x0.size();
    if (n == 0)
        throw std::invalid_argument("nelder_mead needs at least one parameter");

    NelderMeadResult result;
    auto eval = [&](const std::vector<double>& x) {
        ++result.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    Vertex best{x0, eval(x0)};
    if (best.f <= options.f_target) {
        result.x = std::move(best.x);
        result.f = best.f;
        return result;
    }

    std::vector<Vertex> simplex;
    auto init_simplex = [&](const Vertex& origin, double scale) {
        simplex.assign(1, origin);
        for (std::size_t i = 0; i < n; ++i) {
            Vertex v = origin;
            const double xi = v.x[i];
            v.x[i] += xi != 0.0 ? scale * options.initial_step * xi : scale * options.zero_step;
            v.f = eval(v.x);
            simplex.push_back(std::move(v));
        }
    };
    init_simplex(best, 1.0);

    std::vector<double> centroid(n), trial(n);
    auto point = [&](const std::vector<double>& from, double coef) {
        for (std::size_t i = 0; i < n; ++i)
            trial[i] = centroid[i] + coef * (from[i] - centroid[i]);
        return trial;
    };

    double restart_scale = 1.0;
    double best_at_restart = best.f;
    while (result.iterations < options.max_iterations) {
        // Stable sort keeps tie order deterministic.
        std::stable_sort(simplex.begin(), simplex.end(),
                         [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
        if (simplex.front().f < best.f)
            best = simplex.front();
        if (best.f <= options.f_target)
            break;

        double f_spread = simplex.back().f - simplex.front().f;
        double x_spread = 0.0;
        for (std::size_t v = 1; v <= n; ++v)
            for (std::size_t i = 0; i < n; ++i)
                x_spread = std::max(x_spread, std::abs(simplex[v].x[i] - simplex[0].x[i]) /
                                                  (1.0 + std::abs(simplex[0].x[i])));
        if (f_spread <= options.f_tol || x_spread <= options.x_tol) {
            if (result.restarts >= options.max_restarts)
                break;
            // Restart around the best vertex; shrink the new simplex when the
            // previous restart bought nothing.
            if (!(best.f < best_at_restart))
                restart_scale *= 0.1;
            best_at_restart = best.f;
            ++result.restarts;
            init_simplex(best, restart_scale);
            continue;
        }

        ++result.iterations;
        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t i = 0; i < n; ++i)
                centroid[i] += simplex[v].x[i] / static_cast<double>(n);

        Vertex& worst = simplex.back();
        Vertex reflected{point(worst.x, -reflect_coef), 0.0};
        reflected.f = eval(reflected.x);

        if (reflected.f < simplex.front().f) {
            Vertex expanded{point(worst.x, -reflect_coef * expand_coef), 0.0};
            expanded.f = eval(expanded.x);
            worst = expanded.f < reflected.f ? std::move(expanded) : std::move(reflected);
        } else if (reflected.f < simplex[n - 1].f) {
            worst = std::move(reflected);
        } else {
            const bool outside = reflected.f < worst.f;
            Vertex contracted{point(outside ? reflected.x : worst.x, contract_coef), 0.0};
            contracted.f = eval(contracted.x);
            if (contracted.f < std::min(reflected.f, worst.f)) {
                worst = std::move(contracted);
            } else {
                for (std::size_t v = 1; v <= n; ++v) {
                    for (std::size_t i = 0; i < n; ++i)
                        simplex[v].x[i] =
                            simplex[0].x[i] + shrink_coef * (simplex[v].x[i] - simplex[0].x[i]);
                    simplex[v].f = eval(simplex[v].x);
                }
            }
        }
    }

    for (const auto& v : simplex)
        if (v.f < best.f)
            best = v;
    result.x = std::move(best.x);
    result.f = best.f;
    return result;
}

} // namespace vlab::beam
