// Grid geometry shared by every field type: detector dimensions in pixels
// plus the physical calibration (pixel pitch and illumination wavelength,
// both in micrometers).
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qpi {

struct GridSpec {
    std::size_t width = 0;    // pixels, x / column direction
    std::size_t height = 0;   // pixels, y / row direction
    double pixel_pitch = 1.0; // micrometers per pixel at the object plane
    double wavelength = 0.632; // micrometers

    std::size_t size() const { return width * height; }

    void validate() const {
        if (width < 8 || height < 8)
            throw std::invalid_argument("GridSpec: dimensions must be at least 8x8, got " +
                                        std::to_string(width) + "x" + std::to_string(height));
        if (!(pixel_pitch > 0.0))
            throw std::invalid_argument("GridSpec: pixel_pitch must be positive");
        if (!(wavelength > 0.0))
            throw std::invalid_argument("GridSpec: wavelength must be positive");
    }

    bool operator==(const GridSpec&) const = default;
};

// Axis-aligned pixel window, half-open in both directions.
struct Rect {
    std::size_t x0 = 0, y0 = 0;
    std::size_t x1 = 0, y1 = 0;

    std::size_t width() const { return x1 - x0; }
    std::size_t height() const { return y1 - y0; }
    bool empty() const { return x1 <= x0 || y1 <= y0; }

    static Rect full(const GridSpec& g) { return {0, 0, g.width, g.height}; }

    void validate_within(const GridSpec& g) const {
        if (empty() || x1 > g.width || y1 > g.height)
            throw std::invalid_argument("Rect: window empty or outside the grid");
    }
};

} // namespace qpi
