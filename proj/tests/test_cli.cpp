#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "qpi/config.hpp"
#include "qpi/pipeline.hpp"

using namespace qpi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        const auto tick = static_cast<std::uint64_t>(
            std::chrono::steady_clock::now().time_since_epoch().count());
        path = fs::temp_directory_path() / ("qpi_cli_test_" + std::to_string(splitmix64(tick)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// tiny corpus on a small grid so stage tests stay quick; class means are
// scaled down because a 128-px frame cannot carry the full-size fringe
// bandwidth of the reference population
Config small_config(std::size_t n_nonviable, std::size_t n_viable) {
    Config cfg = Config::parse(R"(
[grid]
width = 128
height = 128

[population]
viable_mean = 8.0
viable_std = 0.8
nonviable_mean = 2.5
nonviable_std = 0.3
radius_mean = 30
radius_std = 3
radius_min = 24
radius_max = 36
center_jitter = 6

[reconstruct]
filter_radius_factor = 0.8

[sparse]
max_outer = 40
stop_tol = 1e-5
)");
    cfg.set("population.n_nonviable", std::to_string(n_nonviable));
    cfg.set("population.n_viable", std::to_string(n_viable));
    return cfg;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(QPI_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

} // namespace

TEST_CASE("config parser") {
    const Config cfg = Config::parse(R"(
# comment
[grid]
width = 256
pixel_pitch = 0.25

[analyze]
threshold = 6.0
level = auto
)");
    CHECK(cfg.get_size("grid.width", 0) == 256);
    CHECK(cfg.get_double("grid.pixel_pitch", 0.0) == 0.25);
    CHECK(cfg.get_double("grid.wavelength", 0.632) == 0.632); // fallback
    CHECK(cfg.get_string("analyze.level", "") == "auto");
    CHECK_THROWS(Config::parse("[broken\nkey = 1"));
    CHECK_THROWS(Config::parse("novalue\n"));
    CHECK_THROWS(cfg.get_double("analyze.level", 0.0)); // not a number
}

TEST_CASE("simulate stage writes holograms, truth and manifest") {
    TempDir tmp;
    const Config cfg = small_config(1, 0);
    const SimulateResult sim = run_simulate(cfg, tmp.path, 7, 1);
    REQUIRE(sim.report.ok());
    REQUIRE(sim.manifest.size() == 1);
    CHECK(fs::exists(tmp.path / "manifest.csv"));
    CHECK(fs::exists(tmp.path / sim.manifest[0].hologram));
    CHECK(fs::exists(tmp.path / sim.manifest[0].truth_phase));

    // same seed -> identical manifest bytes
    TempDir tmp2;
    run_simulate(cfg, tmp2.path, 7, 1);
    CHECK(read_file(tmp.path / "manifest.csv") == read_file(tmp2.path / "manifest.csv"));

    // class counts in the manifest match the requested mix
    TempDir tmp3;
    const SimulateResult mix = run_simulate(small_config(3, 2), tmp3.path, 7, 2);
    std::size_t nv = 0, v = 0;
    for (const auto& r : mix.manifest) (r.label == GrainLabel::viable ? v : nv) += 1;
    CHECK(nv == 3);
    CHECK(v == 2);
}

TEST_CASE("reconstruct stage: fourier emits phase maps, sparse adds traces") {
    TempDir tmp;
    const Config cfg = small_config(1, 1);
    const SimulateResult sim = run_simulate(cfg, tmp.path, 3, 2);
    std::vector<fs::path> holos;
    for (const auto& r : sim.manifest) holos.push_back(tmp.path / r.hologram);

    const ReconstructResult ft = run_reconstruct(cfg, tmp.path, holos, "fourier", 2);
    REQUIRE(ft.report.ok());
    CHECK(fs::exists(tmp.path / "recon" / "grain_0000.f64"));
    CHECK_FALSE(fs::exists(tmp.path / "recon" / "grain_0000_trace.csv"));
    const PhaseMap wrapped = load_phase_map(tmp.path / "recon" / "grain_0000.f64");
    CHECK(wrapped.wrapped);

    const ReconstructResult sp = run_reconstruct(cfg, tmp.path, holos, "sparse", 2);
    REQUIRE(sp.report.ok());
    REQUIRE(fs::exists(tmp.path / "recon" / "grain_0000_trace.csv"));

    // trace total is non-increasing
    std::ifstream trace(tmp.path / "recon" / "grain_0000_trace.csv");
    std::string line;
    std::getline(trace, line); // header
    double prev = std::numeric_limits<double>::infinity();
    while (std::getline(trace, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        const double total = std::stod(cells[3]);
        REQUIRE(total <= prev * (1.0 + 1e-8) + 1e-12);
        prev = total;
    }

    SECTION("unknown method is a usage error") {
        CHECK_THROWS_AS(run_reconstruct(cfg, tmp.path, holos, "warp", 1), UsageError);
    }
}

TEST_CASE("analyze stage writes the four tables and survives bad files") {
    TempDir tmp;
    const Config cfg = small_config(2, 2);
    const SimulateResult sim = run_simulate(cfg, tmp.path, 11, 2);
    std::vector<fs::path> holos;
    for (const auto& r : sim.manifest) holos.push_back(tmp.path / r.hologram);
    run_reconstruct(cfg, tmp.path, holos, "fourier", 2);

    AnalyzeOptions opts;
    opts.have_truth = true;
    auto inputs = analyze_inputs_from_manifest(sim.manifest, tmp.path);

    // a flat phase map produces an unknown-label row but not a failure of the batch
    PhaseMap flat(grid_from_config(cfg), false);
    save_phase_map(flat, tmp.path / "recon" / "flat.f64");
    AnalyzeInput flat_in;
    flat_in.phase_file = tmp.path / "recon" / "flat.f64";
    flat_in.grain_id = 99;
    inputs.push_back(flat_in);

    const AnalyzeResult res = run_analyze(inputs, opts, tmp.path, 2);
    CHECK(res.report.failures.size() == 1); // the flat file records "no grain found"
    for (const auto& f : {"features.csv", "stats.csv", "ttest.csv", "histogram.csv", "metrics.csv"})
        CHECK(fs::exists(tmp.path / f));

    const std::string features = read_file(tmp.path / "features.csv");
    CHECK(features.find("unknown") != std::string::npos);
    CHECK(features.find("grain_id,file,area_px,area_um2,perimeter_um,mean_phase,max_phase,"
                        "optical_volume,label") == 0);

    const std::string stats = read_file(tmp.path / "stats.csv");
    CHECK(stats.find("accuracy") != std::string::npos);
    CHECK(stats.find("confusion_viable_pred_viable") != std::string::npos);
}

TEST_CASE("pipeline end to end on a small corpus") {
    TempDir tmp;
    const Config cfg = small_config(2, 2);
    const PipelineResult res = run_pipeline(cfg, tmp.path, 5, "fourier", 2);
    REQUIRE(res.ok());
    CHECK(fs::exists(res.summary_path));
    const std::string summary = read_file(res.summary_path);
    CHECK(summary.find("corpus_size: 4") != std::string::npos);
    CHECK(summary.find("method: fourier") != std::string::npos);
    CHECK(summary.find("accuracy") != std::string::npos);
}

TEST_CASE("pipeline reports stage-attributed failure on a corrupted hologram") {
    TempDir tmp;
    const Config cfg = small_config(2, 1);
    const SimulateResult sim = run_simulate(cfg, tmp.path, 5, 2);
    // corrupt one hologram payload
    std::ofstream(tmp.path / sim.manifest[1].hologram, std::ios::binary) << "P5\n1 1\n65535\nx";
    std::vector<fs::path> holos;
    for (const auto& r : sim.manifest) holos.push_back(tmp.path / r.hologram);
    const ReconstructResult rec = run_reconstruct(cfg, tmp.path, holos, "fourier", 2);
    REQUIRE(rec.report.failures.size() == 1);
    CHECK(rec.report.failures[0].file.find("grain_0001") != std::string::npos);
    CHECK(rec.report.processed == 2);
}

TEST_CASE("bench emits per-hologram rows plus aggregates") {
    TempDir tmp;
    Config cfg = small_config(3, 2);
    const BenchResult res = run_bench(cfg, tmp.path, 2, "fourier", 2);
    REQUIRE(res.report.ok());
    const std::string csv = read_file(res.csv_path);
    std::size_t recon_rows = 0;
    std::istringstream ss(csv);
    std::string line;
    while (std::getline(ss, line))
        if (line.rfind("reconstruct,grain_", 0) == 0) ++recon_rows;
    CHECK(recon_rows == 5);
    CHECK(csv.find("simulate,*") != std::string::npos);
    CHECK(csv.find("reconstruct,*") != std::string::npos);
    CHECK(csv.find("analyze,*") != std::string::npos);
    CHECK(csv.rfind("stage,file,seconds", 0) == 0);
}

TEST_CASE("CLI binary exit codes") {
    TempDir tmp;
    const fs::path out = tmp.path / "out";

    SECTION("usage errors exit 2") {
        CHECK(run_cli("definitely-not-a-command") == 2);
        CHECK(run_cli("pipeline --method warp --out " + out.string()) == 2);
        CHECK(run_cli("analyze --config /nonexistent.cfg --out " + out.string()) == 2);
    }

    SECTION("small fourier pipeline exits 0 and is deterministic") {
        const fs::path cfg_path = tmp.path / "small.cfg";
        std::ofstream(cfg_path) << "[grid]\nwidth = 128\nheight = 128\n"
                                << "[population]\nn_nonviable = 2\nn_viable = 2\n"
                                << "viable_mean = 8.0\nviable_std = 0.8\n"
                                << "nonviable_mean = 2.5\nnonviable_std = 0.3\n"
                                << "radius_mean = 30\nradius_std = 3\nradius_min = 24\n"
                                << "radius_max = 36\ncenter_jitter = 6\n"
                                << "[reconstruct]\nfilter_radius_factor = 0.8\n";
        const std::string base = " --config " + cfg_path.string() + " --seed 9 --workers 2";
        const fs::path out1 = tmp.path / "a";
        const fs::path out2 = tmp.path / "b";
        REQUIRE(run_cli("pipeline --method fourier --out " + out1.string() + base) == 0);
        REQUIRE(run_cli("pipeline --method fourier --out " + out2.string() + base) == 0);
        for (const auto* f :
             {"manifest.csv", "features.csv", "stats.csv", "ttest.csv", "histogram.csv"})
            CHECK(read_file(out1 / f) == read_file(out2 / f));
    }
}
