// Baseline single-shot reconstruction by Fourier demodulation. The hologram
// is multiplied by the (known or estimated) reference wave, which shifts the
// object-bearing cross term to baseband; a low-pass mask isolates it and the
// inverse transform divided by |R|^2 yields the bandwidth-limited object
// estimate. The low-pass step is what costs the method edge resolution.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "qpi/fft.hpp"
#include "qpi/hologram.hpp"

namespace qpi {

inline constexpr double dc_guard_radius = 0.02; // cycles/pixel

struct CarrierEstimate {
    double fx = 0.0; // cycles per pixel
    double fy = 0.0;
    double peak_magnitude = 0.0;

    void validate() const {
        const double f = std::sqrt(fx * fx + fy * fy);
        if (!(f > 0.0) || f >= 0.5)
            throw std::invalid_argument("CarrierEstimate: carrier must satisfy 0 < |f| < 0.5");
    }
};

inline double carrier_distance(const CarrierEstimate& c) {
    return std::sqrt(c.fx * c.fx + c.fy * c.fy);
}

enum class FilterShape { circular, gaussian };

struct FourierFilterSpec {
    FilterShape shape = FilterShape::circular;
    double radius = 0.0; // cycles per pixel
    CarrierEstimate center;

    void validate() const {
        center.validate();
        if (!(radius > 0.0)) throw std::invalid_argument("FourierFilterSpec: radius must be > 0");
        const double dist = std::sqrt(center.fx * center.fx + center.fy * center.fy);
        if (radius >= dist)
            throw std::invalid_argument(
                "FourierFilterSpec: radius must be smaller than the carrier-to-DC distance");
        if (radius > dist - dc_guard_radius)
            throw std::invalid_argument("FourierFilterSpec: filter overlaps the DC guard disc");
    }

    static FourierFilterSpec default_for(const CarrierEstimate& c) {
        FourierFilterSpec f;
        f.center = c;
        f.radius = 0.6 * std::sqrt(c.fx * c.fx + c.fy * c.fy);
        return f;
    }
};

// Strongest off-DC spectral peak in the half plane fx > 0 (or fx == 0,
// fy > 0). Rejects when no peak rises above 3x the median magnitude outside
// the DC guard, which is what a fringe-free frame looks like.
inline CarrierEstimate detect_carrier(const Hologram& holo) {
    holo.validate();
    const GridSpec& g = holo.grid;

    ComplexField spec(g);
    for (std::size_t i = 0; i < g.size(); ++i) spec.values[i] = holo.intensity.values[i];
    spec = fft2(spec);

    double best_mag = -1.0;
    double best_fx = 0.0, best_fy = 0.0;
    std::vector<double> mags;
    mags.reserve(g.size() / 2);
    for (std::size_t ky = 0; ky < g.height; ++ky) {
        const double fy = bin_frequency(ky, g.height);
        for (std::size_t kx = 0; kx < g.width; ++kx) {
            const double fx = bin_frequency(kx, g.width);
            if (fx < 0.0 || (fx == 0.0 && fy <= 0.0)) continue;
            if (std::sqrt(fx * fx + fy * fy) <= dc_guard_radius) continue;
            const double m = std::abs(spec.at(kx, ky));
            mags.push_back(m);
            if (m > best_mag) {
                best_mag = m;
                best_fx = fx;
                best_fy = fy;
            }
        }
    }
    if (mags.empty()) throw std::runtime_error("detect_carrier: grid too small for search");
    std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
    const double median = mags[mags.size() / 2];
    // The absolute floor relative to DC rejects fringe-free frames whose
    // off-DC spectrum is pure rounding noise (median and max both ~0).
    const double dc_mag = std::abs(spec.values[0]);
    if (best_mag <= 3.0 * median || best_mag <= 1e-9 * dc_mag)
        throw std::runtime_error("detect_carrier: no carrier found (no off-DC peak above 3x median)");
    CarrierEstimate est{best_fx, best_fy, best_mag};
    est.validate();
    return est;
}

// Demodulates with a unit-amplitude reference built from `ref` and low-pass
// filters at baseband. Returns the object-wave estimate O.
inline ComplexField ft_reconstruct(const Hologram& holo, const FourierFilterSpec& filter,
                                   std::optional<ReferenceWave> known_ref = std::nullopt) {
    holo.validate();
    filter.validate();
    const GridSpec& g = holo.grid;

    ReferenceWave ref;
    if (known_ref) {
        ref = *known_ref;
    } else {
        // Synthetic reference from the filter's carrier; amplitude from the
        // recorded reference so the output scale stays physical.
        ref.fx = filter.center.fx;
        ref.fy = filter.center.fy;
        ref.amplitude = holo.reference.amplitude;
        ref.phase_offset = 0.0;
    }
    ref.validate();

    // H * R moves the R*.O term to baseband (as A^2 * O).
    const ComplexField r = reference_field(ref, g);
    ComplexField work(g);
    for (std::size_t i = 0; i < g.size(); ++i)
        work.values[i] = holo.intensity.values[i] * r.values[i];

    work = fft2(work);
    for (std::size_t ky = 0; ky < g.height; ++ky) {
        const double fy = bin_frequency(ky, g.height);
        for (std::size_t kx = 0; kx < g.width; ++kx) {
            const double fx = bin_frequency(kx, g.width);
            const double rho = std::sqrt(fx * fx + fy * fy);
            double w = 0.0;
            if (filter.shape == FilterShape::circular) {
                w = rho <= filter.radius ? 1.0 : 0.0;
            } else {
                w = std::exp(-0.5 * (rho / filter.radius) * (rho / filter.radius));
            }
            work.at(kx, ky) *= w;
        }
    }
    work = ifft2(work);

    const double inv_a2 = 1.0 / (ref.amplitude * ref.amplitude);
    for (cplx& v : work.values) v *= inv_a2;
    return work;
}

// Convenience: demodulate against the recorded reference with the default
// filter. Falls back to carrier detection when `trust_sidecar` is false.
inline ComplexField ft_reconstruct_default(const Hologram& holo, bool trust_sidecar = true) {
    CarrierEstimate c;
    if (trust_sidecar) {
        c = CarrierEstimate{holo.reference.fx, holo.reference.fy, 0.0};
        c.validate();
        return ft_reconstruct(holo, FourierFilterSpec::default_for(c), holo.reference);
    }
    c = detect_carrier(holo);
    return ft_reconstruct(holo, FourierFilterSpec::default_for(c));
}

} // namespace qpi
