#include <catch2/catch_amalgamated.hpp>

#include "qpi/fourier_recon.hpp"
#include "qpi/phantom.hpp"

using namespace qpi;

namespace {

const GridSpec grid{512, 512, 0.2, 0.632};
const ReferenceWave default_ref{0.125, 0.0625, 1.0, 0.0};

Hologram phantom_hologram(const PollenPhantom& ph, const ReferenceWave& ref = default_ref) {
    const PhaseMap truth = phantom_phase(ph, grid);
    const ComplexField o = object_field(truth, ph.amplitude_inside, ph.support_mask(grid));
    return record_hologram(o, ref, SensorModel{}, 1);
}

PollenPhantom hemisphere_phantom(double peak = 9.0) {
    PollenPhantom p;
    p.profile = PhantomProfile::hemisphere;
    p.center_x = 256.0;
    p.center_y = 256.0;
    p.radius = 80.0;
    p.peak_phase = peak;
    p.rim_softness = 1.5;
    return p;
}

double disc_rms_wrapped(const PhaseMap& a, const PhaseMap& b, double cx, double cy, double R) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < a.grid.height; ++y)
        for (std::size_t x = 0; x < a.grid.width; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            if (dx * dx + dy * dy > R * R) continue;
            const double d = wrap(a.at(x, y) - b.at(x, y));
            acc += d * d;
            ++n;
        }
    return std::sqrt(acc / static_cast<double>(n));
}

} // namespace

TEST_CASE("detect_carrier finds the recording carrier") {
    SECTION("hemisphere phantom: bin-accurate estimate") {
        const Hologram h = phantom_hologram(hemisphere_phantom());
        const CarrierEstimate c = detect_carrier(h);
        CHECK_THAT(c.fx, Catch::Matchers::WithinAbs(0.125, 1.0 / 512.0 + 1e-12));
        CHECK_THAT(c.fy, Catch::Matchers::WithinAbs(0.0625, 1.0 / 512.0 + 1e-12));
    }
    SECTION("uniform object: exact (pure cosine spectrum)") {
        const ComplexField o(grid, {1.0, 0.0});
        const Hologram h = record_hologram(o, default_ref, SensorModel{}, 1);
        const CarrierEstimate c = detect_carrier(h);
        CHECK_THAT(c.fx, Catch::Matchers::WithinAbs(0.125, 1e-12));
        CHECK_THAT(c.fy, Catch::Matchers::WithinAbs(0.0625, 1e-12));
    }
    SECTION("flat intensity has no carrier") {
        // |R + 0|^2 is constant; only the DC term exists.
        const ComplexField o(grid, {0.0, 0.0});
        const Hologram h = record_hologram(o, default_ref, SensorModel{}, 1);
        CHECK_THROWS_WITH(detect_carrier(h), Catch::Matchers::ContainsSubstring("no carrier"));
    }
}

TEST_CASE("noiseless hologram spectrum has exactly three lobes") {
    const ComplexField o(grid, {1.0, 0.0});
    const Hologram h = record_hologram(o, default_ref, SensorModel{}, 1);
    ComplexField spec(grid);
    for (std::size_t i = 0; i < grid.size(); ++i) spec.values[i] = h.intensity.values[i];
    spec = fft2(spec);
    double in_lobes = 0.0, total = 0.0;
    for (std::size_t ky = 0; ky < grid.height; ++ky)
        for (std::size_t kx = 0; kx < grid.width; ++kx) {
            const double fx = bin_frequency(kx, grid.width);
            const double fy = bin_frequency(ky, grid.height);
            const double e = std::norm(spec.at(kx, ky));
            total += e;
            const bool dc = std::sqrt(fx * fx + fy * fy) < 0.01;
            const double dplus = std::hypot(fx - default_ref.fx, fy - default_ref.fy);
            const double dminus = std::hypot(fx + default_ref.fx, fy + default_ref.fy);
            if (dc || dplus < 0.01 || dminus < 0.01) in_lobes += e;
        }
    REQUIRE(in_lobes / total >= 1.0 - 1e-12);
}

TEST_CASE("filter validation") {
    CarrierEstimate c{0.125, 0.0625, 1.0};
    FourierFilterSpec f;
    f.center = c;
    f.radius = carrier_distance(c) * 0.99; // would leak DC through the guard
    CHECK_THROWS(f.validate());
    f.radius = carrier_distance(c) + 0.1;
    CHECK_THROWS(f.validate());
    f.radius = 0.6 * carrier_distance(c);
    CHECK_NOTHROW(f.validate());
    f.radius = 0.0;
    CHECK_THROWS(f.validate());
}

TEST_CASE("ft_reconstruct analytic cases") {
    SECTION("uniform object recovered to 1e-3 phase error") {
        const ComplexField o(grid, {1.0, 0.0});
        const ReferenceWave ref{0.125, 0.0625, 1.0, 0.7};
        const Hologram h = record_hologram(o, ref, SensorModel{}, 1);
        const ComplexField rec = ft_reconstruct_default(h);
        const PhaseMap p = phase_of(rec);
        for (std::size_t i = 0; i < p.values.size(); ++i)
            REQUIRE(std::abs(wrap(p.values[i])) < 1e-3);
        // amplitude close to 1 as well
        for (const auto& v : rec.values)
            REQUIRE_THAT(std::abs(v), Catch::Matchers::WithinAbs(1.0, 1e-3));
    }
    SECTION("zero-phase phantom reconstructs to ~zero phase") {
        const Hologram h = phantom_hologram(hemisphere_phantom(0.0));
        const PhaseMap p = phase_of(ft_reconstruct_default(h));
        for (std::size_t i = 0; i < p.values.size(); ++i)
            REQUIRE(std::abs(wrap(p.values[i])) < 1e-3);
    }
}

TEST_CASE("ft_reconstruct hemisphere: good interior, blurred edges") {
    const PollenPhantom ph = hemisphere_phantom(9.0);
    const PhaseMap truth = phantom_phase(ph, grid);
    const Hologram h = phantom_hologram(ph);
    const PhaseMap rec = phase_of(ft_reconstruct_default(h));

    const double interior =
        disc_rms_wrapped(rec, truth, ph.center_x, ph.center_y, ph.radius - 10.0);
    CHECK(interior < 0.1);

    // Edge band error exceeds the interior error: the paper's blur effect.
    double edge_acc = 0.0;
    std::size_t edge_n = 0;
    for (std::size_t y = 0; y < grid.height; ++y)
        for (std::size_t x = 0; x < grid.width; ++x) {
            const double dx = static_cast<double>(x) - ph.center_x;
            const double dy = static_cast<double>(y) - ph.center_y;
            const double r = std::sqrt(dx * dx + dy * dy);
            if (std::abs(r - ph.radius) > 3.0) continue;
            const double d = wrap(rec.at(x, y) - truth.at(x, y));
            edge_acc += d * d;
            ++edge_n;
        }
    const double edge = std::sqrt(edge_acc / static_cast<double>(edge_n));
    CHECK(edge > interior);
}

TEST_CASE("ft_reconstruct is linear in the hologram scale") {
    const Hologram h = phantom_hologram(hemisphere_phantom(4.0));
    Hologram scaled = h;
    for (double& v : scaled.intensity.values) v *= 2.5;

    const ComplexField a = ft_reconstruct_default(h);
    const ComplexField b = ft_reconstruct_default(scaled);
    const PhaseMap pa = phase_of(a);
    const PhaseMap pb = phase_of(b);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (std::abs(a.values[i]) < 1e-6) continue;
        REQUIRE_THAT(std::abs(b.values[i]),
                     Catch::Matchers::WithinRel(2.5 * std::abs(a.values[i]), 1e-9));
        REQUIRE_THAT(wrap(pb.values[i] - pa.values[i]), Catch::Matchers::WithinAbs(0.0, 1e-9));
    }
}

TEST_CASE("reconstruction error shrinks with filter radius until the DC guard") {
    const PollenPhantom ph = hemisphere_phantom(6.0);
    const PhaseMap truth = phantom_phase(ph, grid);
    const Hologram h = phantom_hologram(ph);
    const double dist = carrier_distance({default_ref.fx, default_ref.fy, 0.0});

    double prev = 1e9;
    for (double factor : {0.3, 0.5, 0.8}) {
        FourierFilterSpec f;
        f.center = {default_ref.fx, default_ref.fy, 0.0};
        f.radius = factor * dist;
        const PhaseMap rec = phase_of(ft_reconstruct(h, f, default_ref));
        const double err = disc_rms_wrapped(rec, truth, ph.center_x, ph.center_y, ph.radius);
        REQUIRE(err < prev);
        prev = err;
    }
}
