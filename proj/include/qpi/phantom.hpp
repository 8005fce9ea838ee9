// Parametric pollen-like phase objects. A grain is a disc of optical
// thickness: viable grains carry a hemispherical projected-phase profile,
// non-viable ones a flat plateau. The profile edge is softened with a
// Gaussian so synthetic rims resemble imaged ones rather than ideal steps.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qpi/field.hpp"

namespace qpi {

enum class PhantomProfile { hemisphere, plateau };

struct PollenPhantom {
    PhantomProfile profile = PhantomProfile::hemisphere;
    double center_x = 0.0; // pixels
    double center_y = 0.0;
    double radius = 0.0;         // pixels
    double peak_phase = 0.0;     // radians
    double amplitude_inside = 1.0; // transmission amplitude on the disc, (0, 1]
    double rim_softness = 1.5;   // Gaussian edge smoothing sigma, pixels

    // Smoothing reach used for support checks; the blur kernel is truncated
    // at 4 sigma so phase is exactly zero beyond radius + reach.
    double smoothing_reach() const { return rim_softness > 0.0 ? 4.0 * rim_softness : 0.0; }

    void validate(const GridSpec& grid) const {
        grid.validate();
        if (!(radius > 0.0)) throw std::invalid_argument("PollenPhantom: radius must be positive");
        if (peak_phase < 0.0) throw std::invalid_argument("PollenPhantom: peak_phase must be >= 0");
        if (!(amplitude_inside > 0.0) || amplitude_inside > 1.0)
            throw std::invalid_argument("PollenPhantom: amplitude_inside must be in (0, 1]");
        if (rim_softness < 0.0)
            throw std::invalid_argument("PollenPhantom: rim_softness must be >= 0");
        const double reach = radius + smoothing_reach();
        if (center_x - reach < 0.0 || center_y - reach < 0.0 ||
            center_x + reach > static_cast<double>(grid.width) - 1.0 ||
            center_y + reach > static_cast<double>(grid.height) - 1.0)
            throw std::invalid_argument("PollenPhantom: disc (incl. rim smoothing) outside grid");
    }

    // Disc support mask (r <= radius), used as the object transmission mask.
    std::vector<bool> support_mask(const GridSpec& grid) const {
        std::vector<bool> mask(grid.size(), false);
        for (std::size_t y = 0; y < grid.height; ++y)
            for (std::size_t x = 0; x < grid.width; ++x) {
                const double dx = static_cast<double>(x) - center_x;
                const double dy = static_cast<double>(y) - center_y;
                mask[y * grid.width + x] = (dx * dx + dy * dy) <= radius * radius;
            }
        return mask;
    }
};

namespace detail {

// Separable Gaussian blur, kernel truncated at 4 sigma and renormalized.
inline void gaussian_blur_inplace(std::vector<double>& img, std::size_t width, std::size_t height,
                                  double sigma) {
    if (sigma <= 0.0) return;
    const int hw = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<double> kernel(2 * hw + 1);
    double sum = 0.0;
    for (int k = -hw; k <= hw; ++k) {
        kernel[k + hw] = std::exp(-0.5 * (k / sigma) * (k / sigma));
        sum += kernel[k + hw];
    }
    for (double& v : kernel) v /= sum;

    std::vector<double> tmp(img.size(), 0.0);
    const auto W = static_cast<std::ptrdiff_t>(width);
    const auto H = static_cast<std::ptrdiff_t>(height);
    // Rows. Values outside the image are treated as zero: the phantom lies
    // strictly inside, so nothing is lost at the frame.
    for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int k = -hw; k <= hw; ++k) {
                const std::ptrdiff_t xx = x + k;
                if (xx >= 0 && xx < W) acc += kernel[k + hw] * img[y * W + xx];
            }
            tmp[y * W + x] = acc;
        }
    // Columns.
    for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int k = -hw; k <= hw; ++k) {
                const std::ptrdiff_t yy = y + k;
                if (yy >= 0 && yy < H) acc += kernel[k + hw] * tmp[yy * W + x];
            }
            img[y * W + x] = acc;
        }
}

} // namespace detail

// Ground-truth projected phase of a phantom, returned unwrapped.
// hemisphere: peak * sqrt(1 - (r/R)^2) inside the disc; plateau: peak inside,
// zero outside; both smoothed by rim_softness.
inline PhaseMap phantom_phase(const PollenPhantom& phantom, const GridSpec& grid) {
    phantom.validate(grid);
    PhaseMap out(grid, /*wrapped=*/false);
    for (std::size_t y = 0; y < grid.height; ++y)
        for (std::size_t x = 0; x < grid.width; ++x) {
            const double dx = static_cast<double>(x) - phantom.center_x;
            const double dy = static_cast<double>(y) - phantom.center_y;
            const double r = std::sqrt(dx * dx + dy * dy);
            double v = 0.0;
            if (r <= phantom.radius) {
                if (phantom.profile == PhantomProfile::hemisphere) {
                    const double u = r / phantom.radius;
                    v = phantom.peak_phase * std::sqrt(std::max(0.0, 1.0 - u * u));
                } else {
                    v = phantom.peak_phase;
                }
            }
            out.at(x, y) = v;
        }
    detail::gaussian_blur_inplace(out.values, grid.width, grid.height, phantom.rim_softness);
    return out;
}

// Pure-phase (optionally absorbing) object wave: a * exp(i*phi), with the
// transmission amplitude applied on the mask and unity outside.
inline ComplexField object_field(const PhaseMap& phase, double amplitude_inside,
                                 const std::vector<bool>& mask) {
    if (phase.wrapped) throw std::invalid_argument("object_field: phase must be unwrapped");
    if (!phase.finite()) throw std::invalid_argument("object_field: non-finite phase");
    if (mask.size() != phase.grid.size())
        throw std::invalid_argument("object_field: mask size mismatch");
    ComplexField out(phase.grid);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const double a = mask[i] ? amplitude_inside : 1.0;
        out.values[i] = std::polar(a, phase.values[i]);
    }
    return out;
}

} // namespace qpi
