#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace vlab::sim {

/// One sampled process curve.
struct Channel {
    std::string label;
    std::string unit;
    std::vector<double> values;

    bool operator==(const Channel&) const = default;
};

/// Sampled process curves sharing a common abscissa.
///
/// The abscissa is time in seconds for every lab except beam transport,
/// where it is the path length along the channel in meters. Channels keep
/// insertion order so that exported columns follow the order in which a
/// model declared them.
class TimeSeries {
public:
    TimeSeries() = default;
    explicit TimeSeries(std::vector<double> times);

    const std::vector<double>& times() const { return times_; }
    const std::vector<Channel>& channels() const { return channels_; }
    std::size_t size() const { return times_.size(); }

    /// Throws std::invalid_argument on duplicate label or length mismatch.
    void add_channel(std::string label, std::string unit, std::vector<double> values);

    bool has_channel(std::string_view label) const;
    /// Throws std::out_of_range for unknown labels.
    const Channel& channel(std::string_view label) const;

    /// Keeps only the listed channels, in the listed order.
    TimeSeries select(const std::vector<std::string>& labels) const;

    /// Checks strictly increasing times and channel lengths.
    void validate() const;

    bool operator==(const TimeSeries&) const = default;

private:
    std::vector<double> times_;
    std::vector<Channel> channels_;
};

/// Linear interpolation of a channel at abscissa t.
///
/// Exact at sample points. Throws std::out_of_range for an unknown channel
/// or when t lies outside [times.front(), times.back()].
double sample_at(const TimeSeries& series, std::string_view channel, double t);

/// Uniform grid of n points spanning [t0, t1] with both ends exact.
std::vector<double> uniform_grid(double t0, double t1, std::size_t n);

} // namespace vlab::sim
