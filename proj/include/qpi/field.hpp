// Core value types for quantitative phase work: real images, complex wave
// fields and phase maps on a common grid. All storage is row-major with
// index y*width + x; x runs along columns, y along rows.
#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "qpi/geometry.hpp"

namespace qpi {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// Principal value in [-pi, pi). The half-open interval makes the result
// unique; +pi maps to -pi.
inline double wrap(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("wrap: non-finite input");
    double r = x - two_pi * std::floor((x + pi) / two_pi);
    if (r >= pi) r -= two_pi;
    if (r < -pi) r += two_pi;
    return r;
}

struct RealImage {
    GridSpec grid;
    std::vector<double> values;

    RealImage() = default;
    explicit RealImage(const GridSpec& g, double fill = 0.0) : grid(g), values(g.size(), fill) {
        grid.validate();
    }

    double& at(std::size_t x, std::size_t y) { return values[y * grid.width + x]; }
    double at(std::size_t x, std::size_t y) const { return values[y * grid.width + x]; }

    bool finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

struct ComplexField {
    GridSpec grid;
    std::vector<cplx> values;

    ComplexField() = default;
    explicit ComplexField(const GridSpec& g, cplx fill = {0.0, 0.0})
        : grid(g), values(g.size(), fill) {
        grid.validate();
    }

    cplx& at(std::size_t x, std::size_t y) { return values[y * grid.width + x]; }
    cplx at(std::size_t x, std::size_t y) const { return values[y * grid.width + x]; }

    bool finite() const {
        for (const cplx& v : values)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        return true;
    }

    void require_finite(const char* who) const {
        if (!finite()) throw std::invalid_argument(std::string(who) + ": field contains NaN/Inf");
    }
};

// Phase in radians. `wrapped` distinguishes raw arctangent output
// (every value in [-pi, pi)) from an unwrapped continuous surface.
struct PhaseMap {
    GridSpec grid;
    std::vector<double> values;
    bool wrapped = false;

    PhaseMap() = default;
    PhaseMap(const GridSpec& g, bool wrapped_flag, double fill = 0.0)
        : grid(g), values(g.size(), fill), wrapped(wrapped_flag) {
        grid.validate();
    }

    double& at(std::size_t x, std::size_t y) { return values[y * grid.width + x]; }
    double at(std::size_t x, std::size_t y) const { return values[y * grid.width + x]; }

    bool finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void validate() const {
        if (values.size() != grid.size())
            throw std::invalid_argument("PhaseMap: value count does not match grid");
        if (!finite()) throw std::invalid_argument("PhaseMap: non-finite values");
        if (wrapped) {
            for (double v : values)
                if (v < -pi || v >= pi)
                    throw std::invalid_argument("PhaseMap: wrapped value outside [-pi, pi)");
        }
    }
};

// Four-quadrant arctangent of each value. The phase of exactly 0+0i is
// defined as 0 so the map stays total; +pi folds to -pi to keep the
// half-open range.
inline PhaseMap phase_of(const ComplexField& f) {
    f.require_finite("phase_of");
    PhaseMap out(f.grid, /*wrapped=*/true);
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        const cplx v = f.values[i];
        double p = (v.real() == 0.0 && v.imag() == 0.0) ? 0.0 : std::atan2(v.imag(), v.real());
        if (p >= pi) p = -pi;
        out.values[i] = p;
    }
    return out;
}

// Elementwise modulus.
inline RealImage amplitude_of(const ComplexField& f) {
    f.require_finite("amplitude_of");
    RealImage out(f.grid);
    for (std::size_t i = 0; i < f.values.size(); ++i) out.values[i] = std::abs(f.values[i]);
    return out;
}

inline void require_same_grid(const GridSpec& a, const GridSpec& b, const char* who) {
    if (!(a == b)) throw std::invalid_argument(std::string(who) + ": grid mismatch");
}

} // namespace qpi
