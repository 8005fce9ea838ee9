#include <catch2/catch_amalgamated.hpp>

#include "qpi/phantom.hpp"
#include "qpi/random.hpp"
#include "qpi/unwrap.hpp"

using namespace qpi;

namespace {

const GridSpec grid{128, 128, 0.2, 0.632};

PhaseMap wrapped_copy(const PhaseMap& surface) {
    PhaseMap w(surface.grid, /*wrapped=*/true);
    for (std::size_t i = 0; i < surface.values.size(); ++i) w.values[i] = wrap(surface.values[i]);
    return w;
}

PhaseMap ramp_surface(double total_rise) {
    PhaseMap p(grid, false);
    for (std::size_t y = 0; y < grid.height; ++y)
        for (std::size_t x = 0; x < grid.width; ++x)
            p.at(x, y) = total_rise * static_cast<double>(x) / static_cast<double>(grid.width - 1);
    return p;
}

double rms_diff_mod_constant(const PhaseMap& a, const PhaseMap& b) {
    double mean = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) mean += a.values[i] - b.values[i];
    mean /= static_cast<double>(a.values.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i] - mean;
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.values.size()));
}

} // namespace

TEST_CASE("unwrap2d input contract") {
    PhaseMap not_wrapped(grid, false);
    CHECK_THROWS(unwrap2d(not_wrapped));
    PhaseMap out_of_range(grid, true);
    out_of_range.values[0] = 4.0;
    CHECK_THROWS(unwrap2d(out_of_range));
}

TEST_CASE("constant wrapped map unwraps to zero") {
    PhaseMap flat(grid, true, 0.0);
    auto [u, rep] = unwrap2d(flat);
    CHECK_FALSE(u.wrapped);
    for (double v : u.values) REQUIRE(v == 0.0);
    CHECK(rep.residual_rms == 0.0);

    // non-zero constant: zero map, offset reported as residual
    PhaseMap c(grid, true, 1.0);
    auto [u2, rep2] = unwrap2d(c);
    for (double v : u2.values) REQUIRE(v == 0.0);
    CHECK_THAT(rep2.residual_rms, Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("6*pi ramp is recovered up to an additive constant") {
    const PhaseMap truth = ramp_surface(6.0 * pi);
    auto [u, rep] = unwrap2d(wrapped_copy(truth));
    CHECK(rms_diff_mod_constant(u, truth) < 1e-6);
    CHECK(rep.residual_rms < 1e-6);

    // congruence: wrap(unwrapped) == wrapped elementwise
    const PhaseMap w = wrapped_copy(truth);
    for (std::size_t i = 0; i < u.values.size(); ++i)
        REQUIRE(std::abs(wrap(u.values[i] - w.values[i])) < 1e-6);
}

TEST_CASE("wrapped hemisphere phantom is recovered") {
    PollenPhantom ph;
    ph.center_x = 64.0;
    ph.center_y = 64.0;
    ph.radius = 36.0;
    ph.peak_phase = 9.0;
    ph.rim_softness = 1.5;
    const PhaseMap truth = phantom_phase(ph, grid);
    auto [u, rep] = unwrap2d(wrapped_copy(truth));

    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < grid.height; ++y)
        for (std::size_t x = 0; x < grid.width; ++x) {
            const double dx = static_cast<double>(x) - ph.center_x;
            const double dy = static_cast<double>(y) - ph.center_y;
            if (dx * dx + dy * dy > ph.radius * ph.radius) continue;
            const double d = u.at(x, y) - truth.at(x, y);
            acc += d * d;
            ++n;
        }
    REQUIRE(std::sqrt(acc / static_cast<double>(n)) < 0.02);
    CHECK(rep.residual_rms < 1e-9);

    // background-mean-zero: the border frame of the flat-background phantom
    double border = 0.0;
    std::size_t bn = 0;
    for (std::size_t y = 0; y < grid.height; ++y)
        for (std::size_t x = 0; x < grid.width; ++x)
            if (x < 8 || y < 8 || x + 8 >= grid.width || y + 8 >= grid.height) {
                border += u.at(x, y);
                ++bn;
            }
    REQUIRE_THAT(border / static_cast<double>(bn), Catch::Matchers::WithinAbs(0.0, 1e-9));
}

TEST_CASE("congruence on residue-free random smooth surfaces") {
    Rng rng(5);
    PhaseMap smooth(grid, false);
    // random low-order surface: a few gentle sinusoids, gradients well below pi
    const double a1 = rng.uniform(-2.0, 2.0), a2 = rng.uniform(-2.0, 2.0);
    for (std::size_t y = 0; y < grid.height; ++y)
        for (std::size_t x = 0; x < grid.width; ++x)
            smooth.at(x, y) =
                a1 * std::sin(two_pi * static_cast<double>(x) / 64.0) +
                a2 * std::cos(two_pi * static_cast<double>(y) / 48.0) +
                5.0 * static_cast<double>(x + y) / 256.0;
    const PhaseMap w = wrapped_copy(smooth);
    auto [u, rep] = unwrap2d(w);
    for (std::size_t i = 0; i < u.values.size(); ++i)
        REQUIRE(std::abs(wrap(u.values[i] - w.values[i])) < 1e-6);
}

TEST_CASE("additive gauge") {
    const PhaseMap base = ramp_surface(4.0 * pi);

    SECTION("2*pi multiples leave the output unchanged") {
        auto [u0, r0] = unwrap2d(wrapped_copy(base));
        PhaseMap shifted = base;
        for (double& v : shifted.values) v += 2.0 * two_pi;
        auto [u1, r1] = unwrap2d(wrapped_copy(shifted));
        for (std::size_t i = 0; i < u0.values.size(); ++i)
            REQUIRE_THAT(u0.values[i], Catch::Matchers::WithinAbs(u1.values[i], 1e-9));
    }

    SECTION("arbitrary constants agree after border re-zeroing") {
        // The background offset is only removed modulo 2*pi (congruence with
        // the wrapped input wins); compare shapes after removing each border
        // mean.
        auto [u0, r0] = unwrap2d(wrapped_copy(base));
        PhaseMap shifted = base;
        for (double& v : shifted.values) v += 1.23;
        auto [u1, r1] = unwrap2d(wrapped_copy(shifted));
        REQUIRE(rms_diff_mod_constant(u0, u1) < 1e-9);
    }
}

TEST_CASE("linearity on residue-free surfaces") {
    const PhaseMap a = ramp_surface(3.0 * pi);
    PhaseMap b(grid, false);
    for (std::size_t y = 0; y < grid.height; ++y)
        for (std::size_t x = 0; x < grid.width; ++x)
            b.at(x, y) = 1.5 * std::sin(two_pi * static_cast<double>(y) / 96.0);
    PhaseMap sum(grid, false);
    for (std::size_t i = 0; i < sum.values.size(); ++i)
        sum.values[i] = a.values[i] + b.values[i];

    auto [ua, ra] = unwrap2d(wrapped_copy(a));
    auto [ub, rb] = unwrap2d(wrapped_copy(b));
    auto [us, rs] = unwrap2d(wrapped_copy(sum));

    PhaseMap combined(grid, false);
    for (std::size_t i = 0; i < combined.values.size(); ++i)
        combined.values[i] = ua.values[i] + ub.values[i];
    REQUIRE(rms_diff_mod_constant(us, combined) < 1e-6);
}
