// Synthetic grain populations. Each class draws a per-grain target mean
// phase from a truncated Gaussian; the phantom peak is derived from the
// profile shape (a hemispherical profile averages to 2/3 of its peak over
// the disc, a plateau to its peak), so the measured feature reproduces the
// generating statistics.
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "qpi/phantom.hpp"
#include "qpi/random.hpp"

namespace qpi {

enum class GrainLabel { viable, nonviable, unknown };

inline const char* to_string(GrainLabel l) {
    switch (l) {
        case GrainLabel::viable: return "viable";
        case GrainLabel::nonviable: return "nonviable";
        default: return "unknown";
    }
}

inline GrainLabel grain_label_from_string(const std::string& s) {
    if (s == "viable") return GrainLabel::viable;
    if (s == "nonviable") return GrainLabel::nonviable;
    return GrainLabel::unknown;
}

struct ClassModel {
    double mean_phase = 0.0; // radians, class mean of the per-grain target
    double std_phase = 0.0;  // radians
    std::size_t count = 0;
};

struct PopulationSpec {
    // Class parameters for generated viability populations.
    ClassModel viable{9.01, 2.17, 252};
    ClassModel nonviable{3.90, 1.24, 256};
    double radius_mean = 75.0;  // pixels
    double radius_std = 10.0;
    double radius_min = 50.0;
    double radius_max = 110.0;
    double center_jitter = 20.0; // pixels, uniform around grid center
    // Population rims are softer than the single-phantom default: a 0.4 um
    // wall at the default pitch. Sharper rims push wrapped plateau
    // transitions past what the demodulation baseline can carry.
    double rim_softness = 2.0;
    double amplitude_inside = 1.0;
    // A flat profile whose phase exceeds one wavelength is indistinguishable
    // from its 2*pi-reduced twin in single-shot off-axis holography, so
    // plateau targets are redrawn below this cap (0 disables).
    double plateau_phase_cap = 6.2;
};

struct GrainParams {
    std::size_t id = 0;
    GrainLabel label = GrainLabel::unknown;
    PollenPhantom phantom;
    double target_mean_phase = 0.0;
    std::uint64_t seed = 0;
};

// Peak phase that realizes a requested disc-mean phase for a profile. A
// hemispherical cap averages to 2/3 of its peak over the disc. For a
// plateau, Gaussian rim smoothing moves 2*pi*R*sigma*phi(0) of the integral
// outside the disc; the closed-form factor restores the requested mean.
inline double peak_for_mean_phase(PhantomProfile profile, double mean_phase, double radius,
                                  double rim_softness) {
    if (profile == PhantomProfile::hemisphere) return 1.5 * mean_phase;
    const double blur_loss = 2.0 * 0.3989422804014327 * rim_softness / radius;
    return mean_phase / std::max(0.5, 1.0 - blur_loss);
}

inline GrainParams sample_grain(const PopulationSpec& spec, const GridSpec& grid, GrainLabel label,
                                std::size_t id, std::uint64_t grain_seed) {
    Rng rng(grain_seed);
    const ClassModel& cls = label == GrainLabel::viable ? spec.viable : spec.nonviable;

    GrainParams g;
    g.id = id;
    g.label = label;
    g.seed = grain_seed;

    PollenPhantom& ph = g.phantom;
    ph.profile =
        label == GrainLabel::viable ? PhantomProfile::hemisphere : PhantomProfile::plateau;
    g.target_mean_phase = rng.gaussian_positive(cls.mean_phase, cls.std_phase);
    if (ph.profile == PhantomProfile::plateau && spec.plateau_phase_cap > 0.0)
        while (g.target_mean_phase >= spec.plateau_phase_cap)
            g.target_mean_phase = rng.gaussian_positive(cls.mean_phase, cls.std_phase);

    ph.radius = std::clamp(rng.gaussian(spec.radius_mean, spec.radius_std), spec.radius_min,
                           spec.radius_max);
    ph.rim_softness = spec.rim_softness;
    ph.peak_phase =
        peak_for_mean_phase(ph.profile, g.target_mean_phase, ph.radius, ph.rim_softness);
    ph.amplitude_inside = spec.amplitude_inside;
    ph.center_x = static_cast<double>(grid.width) / 2.0 +
                  rng.uniform(-spec.center_jitter, spec.center_jitter);
    ph.center_y = static_cast<double>(grid.height) / 2.0 +
                  rng.uniform(-spec.center_jitter, spec.center_jitter);
    ph.validate(grid);
    return g;
}

// Deterministic population: grain i gets stream derive_seed(global_seed, i).
// Non-viable grains come first, matching the class table ordering.
inline std::vector<GrainParams> sample_population(const PopulationSpec& spec, const GridSpec& grid,
                                                  std::uint64_t global_seed) {
    std::vector<GrainParams> grains;
    grains.reserve(spec.nonviable.count + spec.viable.count);
    std::size_t id = 0;
    for (std::size_t i = 0; i < spec.nonviable.count; ++i, ++id)
        grains.push_back(
            sample_grain(spec, grid, GrainLabel::nonviable, id, derive_seed(global_seed, id)));
    for (std::size_t i = 0; i < spec.viable.count; ++i, ++id)
        grains.push_back(
            sample_grain(spec, grid, GrainLabel::viable, id, derive_seed(global_seed, id)));
    return grains;
}

} // namespace qpi
