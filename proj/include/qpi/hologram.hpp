// Off-axis image-plane hologram formation: H = |R + O|^2 on the detector,
// with a tilted plane reference wave and a simple sensor model (additive
// Gaussian intensity noise, optional quantization, dark floor).
#pragma once

#include <cmath>
#include <cstdint>

#include "qpi/field.hpp"
#include "qpi/random.hpp"

namespace qpi {

struct ReferenceWave {
    double fx = 0.125;  // carrier, cycles per pixel
    double fy = 0.0625;
    double amplitude = 1.0;
    double phase_offset = 0.0; // radians

    double carrier_magnitude() const { return std::sqrt(fx * fx + fy * fy); }

    void validate() const {
        const double f = carrier_magnitude();
        if (!(f > 0.0)) throw std::invalid_argument("ReferenceWave: carrier must be off-axis");
        if (f >= 0.5)
            throw std::invalid_argument("ReferenceWave: carrier at or above Nyquist (0.5 cyc/px)");
        if (!(amplitude > 0.0)) throw std::invalid_argument("ReferenceWave: amplitude must be > 0");
    }
};

struct SensorModel {
    double noise_sigma = 0.0;  // additive Gaussian sigma as a fraction of peak intensity
    int bit_depth = 0;         // 0 = continuous, else 8..16
    double quantum_floor = 0.0; // dark offset as a fraction of peak intensity

    void validate() const {
        if (noise_sigma < 0.0) throw std::invalid_argument("SensorModel: noise_sigma must be >= 0");
        if (bit_depth != 0 && (bit_depth < 8 || bit_depth > 16))
            throw std::invalid_argument("SensorModel: bit_depth must be 0 or in 8..16");
        if (quantum_floor < 0.0)
            throw std::invalid_argument("SensorModel: quantum_floor must be >= 0");
    }
};

struct Hologram {
    GridSpec grid;
    RealImage intensity;      // non-negative
    ReferenceWave reference;  // known at recording time

    void validate() const {
        grid.validate();
        reference.validate();
        if (intensity.values.size() != grid.size())
            throw std::invalid_argument("Hologram: intensity does not match grid");
        for (double v : intensity.values)
            if (!std::isfinite(v) || v < 0.0)
                throw std::invalid_argument("Hologram: intensity must be finite and >= 0");
    }
};

// Tilted plane wave R(x,y) = A * exp(i*(2*pi*(fx*x + fy*y) + offset)).
inline ComplexField reference_field(const ReferenceWave& ref, const GridSpec& grid) {
    ref.validate();
    grid.validate();
    ComplexField out(grid);
    for (std::size_t y = 0; y < grid.height; ++y)
        for (std::size_t x = 0; x < grid.width; ++x) {
            const double ph = two_pi * (ref.fx * static_cast<double>(x) +
                                        ref.fy * static_cast<double>(y)) +
                              ref.phase_offset;
            out.at(x, y) = std::polar(ref.amplitude, ph);
        }
    return out;
}

// Records |R + O|^2, then applies the sensor model. Noise sigma and the dark
// floor are scaled by the noiseless peak intensity; quantization snaps to
// 2^bit_depth - 1 levels of that peak. Deterministic for a fixed seed.
inline Hologram record_hologram(const ComplexField& object, const ReferenceWave& ref,
                                const SensorModel& sensor, std::uint64_t seed) {
    ref.validate();
    sensor.validate();
    object.require_finite("record_hologram");

    Hologram holo;
    holo.grid = object.grid;
    holo.reference = ref;
    holo.intensity = RealImage(object.grid);

    const ComplexField r = reference_field(ref, object.grid);
    double peak = 0.0;
    for (std::size_t i = 0; i < object.values.size(); ++i) {
        const double v = std::norm(r.values[i] + object.values[i]);
        holo.intensity.values[i] = v;
        peak = std::max(peak, v);
    }

    if (sensor.quantum_floor > 0.0) {
        const double floor_val = sensor.quantum_floor * peak;
        for (double& v : holo.intensity.values) v += floor_val;
    }
    if (sensor.noise_sigma > 0.0) {
        Rng rng(seed);
        const double sigma = sensor.noise_sigma * peak;
        for (double& v : holo.intensity.values) v = std::max(0.0, v + rng.gaussian(0.0, sigma));
    }
    if (sensor.bit_depth > 0) {
        double hmax = 0.0;
        for (double v : holo.intensity.values) hmax = std::max(hmax, v);
        if (hmax > 0.0) {
            const double levels = static_cast<double>((1u << sensor.bit_depth) - 1u);
            const double step = hmax / levels;
            for (double& v : holo.intensity.values) v = std::round(v / step) * step;
        }
    }
    return holo;
}

} // namespace qpi
