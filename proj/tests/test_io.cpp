#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <filesystem>

#include "qpi/hologram.hpp"
#include "qpi/io.hpp"
#include "qpi/phantom.hpp"
#include "qpi/random.hpp"

using namespace qpi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        const auto tick = static_cast<std::uint64_t>(
            std::chrono::steady_clock::now().time_since_epoch().count());
        path = fs::temp_directory_path() / ("qpi_io_test_" + std::to_string(splitmix64(tick)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

const GridSpec grid{64, 64, 0.25, 0.532};

} // namespace

TEST_CASE("complex field round trip is bit exact") {
    TempDir tmp;
    ComplexField f(grid);
    Rng rng(8);
    for (auto& v : f.values) v = {rng.gaussian(), rng.gaussian()};

    const fs::path p = tmp.path / "field.c128";
    save_complex_field(f, p);
    const ComplexField g = load_complex_field(p);
    REQUIRE(g.grid == f.grid);
    REQUIRE(g.values == f.values);
    // sidecar exists and carries the grid
    const Sidecar sc = Sidecar::load(sidecar_path(p));
    CHECK(sc.get_u64("width") == 64);
    CHECK(sc.get_double("pixel_pitch") == 0.25);
    CHECK(sc.get("kind") == "complex_field");
}

TEST_CASE("phase map round trip keeps the wrapped flag") {
    TempDir tmp;
    PhaseMap p(grid, true);
    Rng rng(9);
    for (auto& v : p.values) v = wrap(rng.uniform(-10.0, 10.0));

    const fs::path f = tmp.path / "phase.f64";
    save_phase_map(p, f);
    const PhaseMap q = load_phase_map(f);
    REQUIRE(q.wrapped);
    REQUIRE(q.values == p.values);

    PhaseMap u(grid, false);
    for (auto& v : u.values) v = rng.uniform(-30.0, 30.0);
    save_phase_map(u, tmp.path / "unwrapped.f64");
    REQUIRE_FALSE(load_phase_map(tmp.path / "unwrapped.f64").wrapped);
}

TEST_CASE("wrapped phase map with out-of-range values is rejected on save") {
    TempDir tmp;
    PhaseMap p(grid, true);
    p.values[0] = 3.5;
    CHECK_THROWS(save_phase_map(p, tmp.path / "bad.f64"));
}

TEST_CASE("hologram PGM round trip within 16-bit quantization") {
    TempDir tmp;
    PollenPhantom ph;
    ph.center_x = 32.0;
    ph.center_y = 32.0;
    ph.radius = 12.0;
    ph.peak_phase = 4.0;
    ph.rim_softness = 1.0;
    const PhaseMap truth = phantom_phase(ph, grid);
    const ComplexField o = object_field(truth, 1.0, ph.support_mask(grid));
    const Hologram h = record_hologram(o, ReferenceWave{0.125, 0.0625, 1.0, 0.1}, SensorModel{}, 3);

    Sidecar extras;
    extras.set_u64("grain_id", 5);
    const fs::path p = tmp.path / "holo.pgm";
    save_hologram(h, p, extras);
    const Hologram g = load_hologram(p);

    REQUIRE(g.grid == h.grid);
    CHECK(g.reference.fx == h.reference.fx);
    CHECK(g.reference.fy == h.reference.fy);
    CHECK(g.reference.amplitude == h.reference.amplitude);
    CHECK(g.reference.phase_offset == h.reference.phase_offset);

    double mx = 0.0;
    for (double v : h.intensity.values) mx = std::max(mx, v);
    for (std::size_t i = 0; i < h.intensity.values.size(); ++i)
        REQUIRE(std::abs(g.intensity.values[i] - h.intensity.values[i]) <= mx / 65535.0);

    const Sidecar sc = Sidecar::load(sidecar_path(p));
    CHECK(sc.get_u64("grain_id") == 5);

    // PGM header sanity
    std::ifstream raw(p, std::ios::binary);
    std::string magic;
    raw >> magic;
    CHECK(magic == "P5");
}

TEST_CASE("missing files raise errors") {
    CHECK_THROWS(load_phase_map("/nonexistent/nope.f64"));
    CHECK_THROWS(load_hologram("/nonexistent/nope.pgm"));
    CHECK_THROWS(Sidecar::load("/nonexistent/nope.txt"));
}
