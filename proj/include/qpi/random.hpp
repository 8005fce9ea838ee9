// Seeded, platform-independent random helpers. Batch stages derive one
// stream per grain from the global seed so results do not depend on worker
// scheduling.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qpi {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stream for item `index` under a global seed.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index) {
    return splitmix64(global_seed ^ splitmix64(index + 1));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform01() {
        // 53-bit mantissa draw; avoids distribution-object portability gaps.
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller, one value per call (the spare is kept).
    double gaussian(double mean = 0.0, double sigma = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + sigma * spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return mean + sigma * r * std::cos(a);
    }

    // Gaussian truncated to strictly positive values by redraw.
    double gaussian_positive(double mean, double sigma) {
        for (;;) {
            double v = gaussian(mean, sigma);
            if (v > 0.0) return v;
        }
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace qpi
