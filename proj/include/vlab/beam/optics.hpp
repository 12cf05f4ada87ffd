#pragma once

#include "vlab/sim/time_series.hpp"

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

// Linear transverse optics with decoupled x and y planes and hard-edge
// magnets. Lengths in m, quadrupole strength k in m^-2 (positive focuses in
// x), bend angle in rad, emittance in m*rad.
namespace vlab::beam {

enum class ElementKind { Drift, Quadrupole, SectorBend, ThinQuadrupole };

enum class Plane { X, Y };

struct Element {
    ElementKind kind = ElementKind::Drift;
    double length = 0.0;
    /// k for thick quadrupoles, angle for bends, integrated strength 1/f for
    /// thin quadrupoles, unused (zero) for drifts.
    double strength = 0.0;

    static Element drift(double length) { return {ElementKind::Drift, length, 0.0}; }
    static Element quadrupole(double length, double k) { return {ElementKind::Quadrupole, length, k}; }
    static Element sector_bend(double length, double angle) { return {ElementKind::SectorBend, length, angle}; }
    /// Zero-length lens focusing in x for f > 0.
    static Element thin_lens(double focal_length) { return {ElementKind::ThinQuadrupole, 0.0, 1.0 / focal_length}; }

    bool is_quadrupole() const
    {
        return kind == ElementKind::Quadrupole || kind == ElementKind::ThinQuadrupole;
    }

    /// Throws std::invalid_argument when the element is malformed.
    void validate() const;

    bool operator==(const Element&) const = default;
};

using Beamline = std::vector<Element>;

/// 2x2 matrix acting on (x, x').
struct Matrix2 {
    double m11 = 1, m12 = 0, m21 = 0, m22 = 1;

    static Matrix2 identity() { return {}; }
    double det() const { return m11 * m22 - m12 * m21; }
    double trace() const { return m11 + m22; }
    Matrix2 inverse() const;

    bool operator==(const Matrix2&) const = default;
};

Matrix2 operator*(const Matrix2& a, const Matrix2& b);

struct TransferMatrix {
    Matrix2 x;
    Matrix2 y;

    const Matrix2& plane(Plane p) const { return p == Plane::X ? x : y; }
};

struct Twiss {
    double alpha = 0.0;
    double beta = 1.0;
    double emittance = 1e-6;

    double gamma() const { return (1.0 + alpha * alpha) / beta; }
    /// Throws std::invalid_argument unless beta > 0 and emittance > 0.
    void validate() const;

    bool operator==(const Twiss&) const = default;
};

struct BeamTwiss {
    Twiss x;
    Twiss y;

    static BeamTwiss both(const Twiss& t) { return {t, t}; }
    const Twiss& plane(Plane p) const { return p == Plane::X ? x : y; }

    bool operator==(const BeamTwiss&) const = default;
};

class OpticsError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

Matrix2 element_matrix(const Element& element, Plane plane);

/// Matrix of the first `fraction` of an element (used for sampling inside it).
Matrix2 partial_element_matrix(const Element& element, Plane plane, double fraction);

/// Product M_n ... M_2 M_1 for elements traversed in order 1..n.
TransferMatrix compose(const Beamline& line);

/// Transports Twiss parameters through a unimodular matrix.
/// Throws OpticsError when |det m - 1| exceeds 1e-9.
Twiss propagate_twiss(const Twiss& tw, const Matrix2& m);

/// Beta functions and envelopes sqrt(emittance*beta) along the line. The
/// abscissa is the path length s; samples are at most `step` apart and
/// include every element boundary.
sim::TimeSeries envelope(const Beamline& line, const BeamTwiss& tw0, double step);

struct PlaneStability {
    bool stable = false;
    double trace = 0.0;
    /// arccos(trace/2) when stable, NaN otherwise.
    double phase_advance = 0.0;
};

struct CellStability {
    PlaneStability x;
    PlaneStability y;
    bool stable() const { return x.stable && y.stable; }
};

/// Periodic-cell criterion |trace M| <= 2 per plane.
CellStability cell_stability(const Beamline& cell);

/// Exit Twiss of a line.
BeamTwiss transport(const Beamline& line, const BeamTwiss& tw0);

} // namespace vlab::beam
