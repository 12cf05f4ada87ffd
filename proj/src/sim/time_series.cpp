#include "vlab/sim/time_series.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vlab::sim {

TimeSeries::TimeSeries(std::vector<double> times) : times_(std::move(times)) {}

void TimeSeries::add_channel(std::string label, std::string unit, std::vector<double> values)
{
    if (values.size() != times_.size())
        throw std::invalid_argument("channel '" + label + "' length does not match time axis");
    if (has_channel(label))
        throw std::invalid_argument("duplicate channel '" + label + "'");
    channels_.push_back({std::move(label), std::move(unit), std::move(values)});
}

bool TimeSeries::has_channel(std::string_view label) const
{
    return std::any_of(channels_.begin(), channels_.end(),
                       [&](const Channel& c) { return c.label == label; });
}

const Channel& TimeSeries::channel(std::string_view label) const
{
    auto it = std::find_if(channels_.begin(), channels_.end(),
                           [&](const Channel& c) { return c.label == label; });
    if (it == channels_.end())
        throw std::out_of_range("unknown channel '" + std::string(label) + "'");
    return *it;
}

TimeSeries TimeSeries::select(const std::vector<std::string>& labels) const
{
    TimeSeries out(times_);
    for (const auto& label : labels) {
        const auto& c = channel(label);
        out.add_channel(c.label, c.unit, c.values);
    }
    return out;
}

void TimeSeries::validate() const
{
    for (std::size_t i = 1; i < times_.size(); ++i)
        if (!(times_[i] > times_[i - 1]))
            throw std::invalid_argument("time axis is not strictly increasing");
    for (const auto& c : channels_) {
        if (c.values.size() != times_.size())
            throw std::invalid_argument("channel '" + c.label + "' length mismatch");
        if (c.unit.empty())
            throw std::invalid_argument("channel '" + c.label + "' has no unit");
    }
}

double sample_at(const TimeSeries& series, std::string_view channel, double t)
{
    const auto& values = series.channel(channel).values;
    const auto& times = series.times();
    if (times.empty() || !(t >= times.front() && t <= times.back()))
        throw std::out_of_range("t outside the sampled range");

    auto hi = std::lower_bound(times.begin(), times.end(), t);
    auto k = static_cast<std::size_t>(hi - times.begin());
    if (*hi == t)
        return values[k];
    // t > times[k-1] here since t >= front and *hi != t
    const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    return values[k - 1] + w * (values[k] - values[k - 1]);
}

std::vector<double> uniform_grid(double t0, double t1, std::size_t n)
{
    if (n < 2)
        throw std::invalid_argument("a uniform grid needs at least two points");
    std::vector<double> grid(n);
    const double span = t1 - t0;
    for (std::size_t i = 0; i < n; ++i)
        grid[i] = t0 + span * static_cast<double>(i) / static_cast<double>(n - 1);
    grid.back() = t1;
    return grid;
}

} // namespace vlab::sim
