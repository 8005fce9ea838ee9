// Least-squares 2D phase unwrapping. The unwrapped surface is the solution
// of the discrete Poisson equation driven by the divergence of the wrapped
// phase differences, solved with a cosine transform under Neumann boundaries
// (the 5-point Laplacian here is exactly div(grad) for the forward-difference
// gradient used everywhere else, so the solve is exact on residue-free
// input up to an additive constant).
//
// Offset convention: after the solve the surface is shifted by the circular
// mean of (wrapped - solution), which restores elementwise congruence with
// the input, and then by the nearest 2*pi multiple of the 8-px border-frame
// mean, which zeroes the background without breaking congruence. For
// grain-on-flat-background maps the border mean itself is ~0 and the result
// is background-mean-zero exactly.
//
// The returned surface is the congruent completion of the solve: each pixel
// carries the wrapped input value plus the 2*pi multiple selected by the
// least-squares surface. On residue-free input this changes nothing; on
// residue-laden input it confines the damage to the offending pixels instead
// of letting the smoothing shave whole plateaus. residual_rms reports the
// pre-completion least-squares mismatch, which is the residue diagnostic.
// No weighting or branch cuts: residue-laden regions stay unreliable and the
// report is the signal to treat a grain with suspicion.
#pragma once

#include <cmath>

#include "qpi/fft.hpp"

namespace qpi {

inline constexpr std::size_t background_border_px = 8;

struct UnwrapReport {
    double residual_rms = 0.0;          // RMS of wrap(unwrapped - wrapped); ~0 when residue-free
    bool offset_convention = true;      // background-mean-zero (mod 2*pi) applied
};

namespace detail {

// Mean over the border frame; the frame covers the whole map when the grid
// is 2*border wide or less.
inline double border_mean(const std::vector<double>& v, std::size_t w, std::size_t h,
                          std::size_t border) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            if (x < border || y < border || x + border >= w || y + border >= h) {
                acc += v[y * w + x];
                ++count;
            }
    return count ? acc / static_cast<double>(count) : 0.0;
}

} // namespace detail

namespace detail {

// One unweighted least-squares unwrap: Poisson solve of the wrapped-gradient
// divergence in the DCT basis.
inline std::vector<double> ls_unwrap_pass(const std::vector<double>& phi, std::size_t w,
                                          std::size_t h) {
    std::vector<double> rho(w * h, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            const double dx0 = (x > 0) ? wrap(phi[i] - phi[i - 1]) : 0.0;
            const double dx1 = (x + 1 < w) ? wrap(phi[i + 1] - phi[i]) : 0.0;
            const double dy0 = (y > 0) ? wrap(phi[i] - phi[i - w]) : 0.0;
            const double dy1 = (y + 1 < h) ? wrap(phi[i + w] - phi[i]) : 0.0;
            rho[i] = (dx1 - dx0) + (dy1 - dy0);
        }
    dct2(rho, w, h);
    for (std::size_t ky = 0; ky < h; ++ky)
        for (std::size_t kx = 0; kx < w; ++kx) {
            if (kx == 0 && ky == 0) {
                rho[0] = 0.0;
                continue;
            }
            const double lam =
                2.0 * std::cos(pi * static_cast<double>(kx) / static_cast<double>(w)) +
                2.0 * std::cos(pi * static_cast<double>(ky) / static_cast<double>(h)) - 4.0;
            rho[ky * w + kx] /= lam;
        }
    idct2(rho, w, h);
    return rho;
}

} // namespace detail

inline std::pair<PhaseMap, UnwrapReport> unwrap2d(const PhaseMap& wrapped_map) {
    if (!wrapped_map.wrapped)
        throw std::invalid_argument("unwrap2d: input must be flagged wrapped");
    wrapped_map.validate();
    const GridSpec& g = wrapped_map.grid;
    const std::size_t w = g.width, h = g.height;
    const std::vector<double>& phi = wrapped_map.values;

    // All-equal input carries no gradient information; the normalized result
    // is the zero map and the residual reports the discarded offset.
    bool all_equal = true;
    for (std::size_t i = 1; i < phi.size() && all_equal; ++i) all_equal = (phi[i] == phi[0]);
    if (all_equal) {
        PhaseMap out(g, /*wrapped=*/false);
        UnwrapReport report;
        report.residual_rms = std::abs(wrap(phi[0]));
        return {std::move(out), report};
    }

    std::vector<double> surface = detail::ls_unwrap_pass(phi, w, h);

    // Congruence snap: circular mean of the pointwise offset to the input.
    double cs = 0.0, sn = 0.0;
    for (std::size_t i = 0; i < surface.size(); ++i) {
        const double d = phi[i] - surface[i];
        cs += std::cos(d);
        sn += std::sin(d);
    }
    const double snap = (cs == 0.0 && sn == 0.0) ? 0.0 : std::atan2(sn, cs);
    for (double& v : surface) v += snap;

    // Background zeroing, restricted to 2*pi multiples to keep congruence.
    const double bg = detail::border_mean(surface, w, h, background_border_px);
    const double shift = two_pi * std::round(bg / two_pi);
    if (shift != 0.0)
        for (double& v : surface) v -= shift;

    UnwrapReport report;
    double acc = 0.0;
    for (std::size_t i = 0; i < surface.size(); ++i) {
        const double r = wrap(surface[i] - phi[i]);
        acc += r * r;
    }
    report.residual_rms = std::sqrt(acc / static_cast<double>(surface.size()));

    // Congruent completion: wrapped value + the 2*pi multiple the
    // least-squares surface selected.
    for (std::size_t i = 0; i < surface.size(); ++i)
        surface[i] = phi[i] + two_pi * std::round((surface[i] - phi[i]) / two_pi);

    PhaseMap out(g, /*wrapped=*/false);
    out.values = std::move(surface);
    return {std::move(out), report};
}

} // namespace qpi
