#include "vlab/sim/csv.hpp"

#include <array>
#include <charconv>
#include <stdexcept>

namespace vlab::sim {

std::string format_double(double value)
{
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (res.ec != std::errc())
        throw std::runtime_error("cannot format number");
    return std::string(buf.data(), res.ptr);
}

std::string to_csv(const TimeSeries& series)
{
    std::string out = "t";
    for (const auto& c : series.channels())
        out += "," + c.label + "[" + c.unit + "]";
    out += '\n';
    const auto& times = series.times();
    for (std::size_t k = 0; k < times.size(); ++k) {
        out += format_double(times[k]);
        for (const auto& c : series.channels()) {
            out += ',';
            out += format_double(c.values[k]);
        }
        out += '\n';
    }
    return out;
}

} // namespace vlab::sim
