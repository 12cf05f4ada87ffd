#include "vlab/beam/optics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace vlab::beam {

namespace {

bool finite(double v) { return std::isfinite(v); }

// sin(x)/x and sinh(x)/x without cancellation near zero
double sinc(double x)
{
    if (std::abs(x) < 1e-4)
        return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

double sinhc(double x)
{
    if (std::abs(x) < 1e-4)
        return 1.0 + x * x / 6.0;
    return std::sinh(x) / x;
}

// Thick focusing element with signed strength k over length L.
Matrix2 thick_lens(double k, double length)
{
    if (k == 0.0)
        return {1.0, length, 0.0, 1.0};
    const double rk = std::sqrt(std::abs(k));
    const double phi = rk * length;
    if (k > 0.0)
        return {std::cos(phi), length * sinc(phi), -k * length * sinc(phi), std::cos(phi)};
    return {std::cosh(phi), length * sinhc(phi), -k * length * sinhc(phi), std::cosh(phi)};
}

} // namespace

void Element::validate() const
{
    if (!finite(length) || !finite(strength))
        throw OpticsError("element parameters must be finite");
    if (kind == ElementKind::ThinQuadrupole) {
        if (length != 0.0)
            throw OpticsError("thin quadrupole must have zero length");
        return;
    }
    if (!(length > 0.0))
        throw OpticsError("element length must be > 0");
    if (kind == ElementKind::Drift && strength != 0.0)
        throw OpticsError("drift must have zero strength");
}

Matrix2 Matrix2::inverse() const
{
    const double d = det();
    return {m22 / d, -m12 / d, -m21 / d, m11 / d};
}

Matrix2 operator*(const Matrix2& a, const Matrix2& b)
{
    return {a.m11 * b.m11 + a.m12 * b.m21, a.m11 * b.m12 + a.m12 * b.m22,
            a.m21 * b.m11 + a.m22 * b.m21, a.m21 * b.m12 + a.m22 * b.m22};
}

void Twiss::validate() const
{
    if (!(beta > 0.0) || !finite(beta))
        throw OpticsError("beta must be > 0");
    if (!(emittance > 0.0) || !finite(emittance))
        throw OpticsError("emittance must be > 0");
    if (!finite(alpha))
        throw OpticsError("alpha must be finite");
}

Matrix2 partial_element_matrix(const Element& element, Plane plane, double fraction)
{
    element.validate();
    const double length = element.length * fraction;
    switch (element.kind) {
    case ElementKind::Drift:
        return {1.0, length, 0.0, 1.0};
    case ElementKind::Quadrupole:
        return thick_lens(plane == Plane::X ? element.strength : -element.strength, length);
    case ElementKind::ThinQuadrupole: {
        if (fraction < 1.0)
            return Matrix2::identity();
        const double inv_f = plane == Plane::X ? element.strength : -element.strength;
        return {1.0, 0.0, -inv_f, 1.0};
    }
    case ElementKind::SectorBend: {
        if (plane == Plane::Y || element.strength == 0.0)
            return {1.0, length, 0.0, 1.0};
        // weak focusing 1/rho^2 in the bend plane, rho = L / angle
        const double h = element.strength / element.length;
        return thick_lens(h * h, length);
    }
    }
    throw OpticsError("unknown element kind");
}

Matrix2 element_matrix(const Element& element, Plane plane)
{
    return partial_element_matrix(element, plane, 1.0);
}

TransferMatrix compose(const Beamline& line)
{
    TransferMatrix m;
    for (const auto& e : line) {
        m.x = element_matrix(e, Plane::X) * m.x;
        m.y = element_matrix(e, Plane::Y) * m.y;
    }
    return m;
}

Twiss propagate_twiss(const Twiss& tw, const Matrix2& m)
{
    tw.validate();
    if (!(std::abs(m.det() - 1.0) <= 1e-9))
        throw OpticsError("transfer matrix is not unimodular (det = " + std::to_string(m.det()) + ")");
    const double g = tw.gamma();
    Twiss out;
    out.beta = m.m11 * m.m11 * tw.beta - 2.0 * m.m11 * m.m12 * tw.alpha + m.m12 * m.m12 * g;
    out.alpha = -m.m11 * m.m21 * tw.beta + (m.m11 * m.m22 + m.m12 * m.m21) * tw.alpha -
                m.m12 * m.m22 * g;
    out.emittance = tw.emittance;
    return out;
}

BeamTwiss transport(const Beamline& line, const BeamTwiss& tw0)
{
    const auto m = compose(line);
    return {propagate_twiss(tw0.x, m.x), propagate_twiss(tw0.y, m.y)};
}

sim::TimeSeries envelope(const Beamline& line, const BeamTwiss& tw0, double step)
{
    if (!(step > 0.0) || !finite(step))
        throw OpticsError("envelope step must be > 0");
    tw0.x.validate();
    tw0.y.validate();

    std::vector<double> s{0.0}, bx{tw0.x.beta}, by{tw0.y.beta};
    Twiss tx = tw0.x, ty = tw0.y;
    double s0 = 0.0;
    for (const auto& e : line) {
        e.validate();
        if (e.length == 0.0) {
            tx = propagate_twiss(tx, element_matrix(e, Plane::X));
            ty = propagate_twiss(ty, element_matrix(e, Plane::Y));
            continue;
        }
        const auto pieces = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(e.length / step - 1e-12)));
        for (std::size_t k = 1; k <= pieces; ++k) {
            const double f = static_cast<double>(k) / static_cast<double>(pieces);
            s.push_back(k == pieces ? s0 + e.length : s0 + e.length * f);
            bx.push_back(propagate_twiss(tx, partial_element_matrix(e, Plane::X, f)).beta);
            by.push_back(propagate_twiss(ty, partial_element_matrix(e, Plane::Y, f)).beta);
        }
        tx = propagate_twiss(tx, element_matrix(e, Plane::X));
        ty = propagate_twiss(ty, element_matrix(e, Plane::Y));
        s0 += e.length;
    }

    std::vector<double> ex(bx.size()), ey(by.size());
    for (std::size_t i = 0; i < bx.size(); ++i) {
        ex[i] = std::sqrt(tw0.x.emittance * bx[i]);
        ey[i] = std::sqrt(tw0.y.emittance * by[i]);
    }
    sim::TimeSeries out(std::move(s));
    out.add_channel("beta_x", "m", std::move(bx));
    out.add_channel("beta_y", "m", std::move(by));
    out.add_channel("envelope_x", "m", std::move(ex));
    out.add_channel("envelope_y", "m", std::move(ey));
    return out;
}

CellStability cell_stability(const Beamline& cell)
{
    const auto m = compose(cell);
    auto judge = [](const Matrix2& p) {
        PlaneStability r;
        r.trace = p.trace();
        r.stable = std::abs(r.trace) <= 2.0;
        r.phase_advance = r.stable ? std::acos(r.trace / 2.0)
                                   : std::numeric_limits<double>::quiet_NaN();
        return r;
    };
    return {judge(m.x), judge(m.y)};
}

} // namespace vlab::beam
