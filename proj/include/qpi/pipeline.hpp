// Batch stages behind the CLI: simulate a grain population to files,
// reconstruct holograms (fourier or sparse), unwrap, and analyze into the
// CSV tables. Stages communicate through files in one output directory:
//
//   out/
//     manifest.csv            grain parameters, labels and file paths
//     holo/grain_NNNN.pgm     recorded holograms (+ .txt sidecars)
//     truth/grain_NNNN.f64    ground-truth unwrapped phase
//     recon/grain_NNNN.f64    reconstructed wrapped phase (+ _trace.csv for sparse)
//     unwrapped/grain_NNNN.f64
//     features.csv stats.csv ttest.csv histogram.csv metrics.csv summary.txt
//
// Per-file failures are recorded and skipped so a long batch survives a bad
// frame; the stage result carries the failures for the exit code.
#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "qpi/config.hpp"
#include "qpi/features.hpp"
#include "qpi/fourier_recon.hpp"
#include "qpi/hologram.hpp"
#include "qpi/io.hpp"
#include "qpi/phantom.hpp"
#include "qpi/population.hpp"
#include "qpi/sparse_recon.hpp"
#include "qpi/unwrap.hpp"

namespace qpi {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StageFailure {
    std::string file;
    std::string message;
};

struct StageReport {
    std::size_t processed = 0;
    std::vector<StageFailure> failures;
    bool ok() const { return failures.empty(); }
};

namespace detail {

inline void run_parallel(std::size_t count, std::size_t workers,
                         const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n = std::min(workers, count);
    pool.reserve(n);
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

inline std::string grain_stem(std::size_t id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "grain_%04zu", id);
    return buf;
}

// Paths under `base` are written into CSVs relative to it, keeping outputs
// byte-identical across runs in different directories.
inline std::string display_path(const fs::path& p, const fs::path& base) {
    std::error_code ec;
    const fs::path rel = fs::relative(p, base, ec);
    if (ec || rel.empty()) return p.string();
    const std::string s = rel.string();
    if (s.rfind("..", 0) == 0) return p.string();
    return s;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Configuration resolution

inline GridSpec grid_from_config(const Config& cfg) {
    GridSpec g;
    g.width = cfg.get_size("grid.width", 512);
    g.height = cfg.get_size("grid.height", 512);
    g.pixel_pitch = cfg.get_double("grid.pixel_pitch", 0.2);
    g.wavelength = cfg.get_double("grid.wavelength", 0.632);
    g.validate();
    return g;
}

inline PopulationSpec population_from_config(const Config& cfg) {
    PopulationSpec p;
    p.viable = {cfg.get_double("population.viable_mean", 9.01),
                cfg.get_double("population.viable_std", 2.17),
                cfg.get_size("population.n_viable", 252)};
    p.nonviable = {cfg.get_double("population.nonviable_mean", 3.90),
                   cfg.get_double("population.nonviable_std", 1.24),
                   cfg.get_size("population.n_nonviable", 256)};
    p.radius_mean = cfg.get_double("population.radius_mean", 75.0);
    p.radius_std = cfg.get_double("population.radius_std", 10.0);
    p.radius_min = cfg.get_double("population.radius_min", 50.0);
    p.radius_max = cfg.get_double("population.radius_max", 110.0);
    p.center_jitter = cfg.get_double("population.center_jitter", 20.0);
    p.rim_softness = cfg.get_double("population.rim_softness", 2.0);
    p.amplitude_inside = cfg.get_double("population.amplitude_inside", 1.0);
    p.plateau_phase_cap = cfg.get_double("population.plateau_phase_cap", 6.2);
    return p;
}

inline ReferenceWave reference_from_config(const Config& cfg) {
    ReferenceWave r;
    r.fx = cfg.get_double("reference.fx", 0.125);
    r.fy = cfg.get_double("reference.fy", 0.0625);
    r.amplitude = cfg.get_double("reference.amplitude", 1.0);
    r.phase_offset = cfg.get_double("reference.phase_offset", 0.0);
    r.validate();
    return r;
}

inline SensorModel sensor_from_config(const Config& cfg) {
    SensorModel s;
    s.noise_sigma = cfg.get_double("sensor.noise_sigma", 0.0);
    s.bit_depth = static_cast<int>(cfg.get_size("sensor.bit_depth", 0));
    s.quantum_floor = cfg.get_double("sensor.quantum_floor", 0.0);
    s.validate();
    return s;
}

inline ReconConfig recon_from_config(const Config& cfg) {
    ReconConfig r;
    r.max_outer_iterations = cfg.get_size("sparse.max_outer", 200);
    r.data_steps_per_outer = cfg.get_size("sparse.data_steps", 5);
    r.tv_steps_per_outer = cfg.get_size("sparse.tv_steps", 5);
    r.epsilon = cfg.get_double("sparse.epsilon", 1e-10);
    r.step_ratio = cfg.get_double("sparse.step_ratio", 0.3);
    r.stop_tol = cfg.get_double("sparse.stop_tol", 1e-6);
    r.init_filter_factor = cfg.get_double("sparse.init_filter_factor", 0.8);
    r.validate();
    return r;
}

inline std::string method_from_config(const Config& cfg, const std::string& override_method = "") {
    const std::string m =
        override_method.empty() ? cfg.get_string("reconstruct.method", "fourier") : override_method;
    if (m != "fourier" && m != "sparse")
        throw UsageError("unknown reconstruction method '" + m + "' (expected fourier|sparse)");
    return m;
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestRow {
    std::size_t id = 0;
    GrainLabel label = GrainLabel::unknown;
    PhantomProfile profile = PhantomProfile::hemisphere;
    double target_mean_phase = 0.0;
    double peak_phase = 0.0;
    double radius = 0.0;
    double center_x = 0.0;
    double center_y = 0.0;
    std::uint64_t seed = 0;
    std::string hologram;
    std::string truth_phase;
};

inline void save_manifest(const std::vector<ManifestRow>& rows, const fs::path& path) {
    CsvWriter csv(path);
    csv.row({"id", "label", "profile", "target_mean_phase", "peak_phase", "radius", "center_x",
             "center_y", "seed", "hologram", "truth_phase"});
    for (const auto& r : rows)
        csv.row({std::to_string(r.id), to_string(r.label),
                 r.profile == PhantomProfile::hemisphere ? "hemisphere" : "plateau",
                 CsvWriter::num(r.target_mean_phase), CsvWriter::num(r.peak_phase),
                 CsvWriter::num(r.radius), CsvWriter::num(r.center_x), CsvWriter::num(r.center_y),
                 std::to_string(r.seed), r.hologram, r.truth_phase});
}

inline std::vector<ManifestRow> load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read manifest " + path.string());
    std::vector<ManifestRow> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 11) throw std::runtime_error("manifest: malformed row: " + line);
        ManifestRow r;
        r.id = std::stoull(cells[0]);
        r.label = grain_label_from_string(cells[1]);
        r.profile = cells[2] == "plateau" ? PhantomProfile::plateau : PhantomProfile::hemisphere;
        r.target_mean_phase = std::stod(cells[3]);
        r.peak_phase = std::stod(cells[4]);
        r.radius = std::stod(cells[5]);
        r.center_x = std::stod(cells[6]);
        r.center_y = std::stod(cells[7]);
        r.seed = std::stoull(cells[8]);
        r.hologram = cells[9];
        r.truth_phase = cells[10];
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateResult {
    StageReport report;
    std::vector<ManifestRow> manifest;
    fs::path manifest_path;
};

inline SimulateResult run_simulate(const Config& cfg, const fs::path& out_dir, std::uint64_t seed,
                                   std::size_t workers) {
    const GridSpec grid = grid_from_config(cfg);
    const PopulationSpec pop = population_from_config(cfg);
    const ReferenceWave ref = reference_from_config(cfg);
    const SensorModel sensor = sensor_from_config(cfg);
    const bool emit_brightfield = cfg.get_bool("simulate.emit_brightfield", false);
    const std::string config_hash = fnv1a_hex(cfg.canonical());

    fs::create_directories(out_dir / "holo");
    fs::create_directories(out_dir / "truth");
    if (emit_brightfield) fs::create_directories(out_dir / "brightfield");

    const std::vector<GrainParams> grains = sample_population(pop, grid, seed);

    SimulateResult result;
    result.manifest.resize(grains.size());
    std::mutex failure_mutex;

    detail::run_parallel(grains.size(), workers, [&](std::size_t i) {
        const GrainParams& g = grains[i];
        const std::string stem = detail::grain_stem(g.id);
        try {
            const PhaseMap truth = phantom_phase(g.phantom, grid);
            const ComplexField object =
                object_field(truth, g.phantom.amplitude_inside, g.phantom.support_mask(grid));
            const Hologram holo = record_hologram(object, ref, sensor, g.seed);

            Sidecar meta;
            meta.set_u64("grain_id", g.id);
            meta.set_u64("seed", g.seed);
            meta.set("label", to_string(g.label));
            meta.set("profile",
                     g.phantom.profile == PhantomProfile::hemisphere ? "hemisphere" : "plateau");
            meta.set_double("peak_phase", g.phantom.peak_phase);
            meta.set_double("radius", g.phantom.radius);
            meta.set_double("center_x", g.phantom.center_x);
            meta.set_double("center_y", g.phantom.center_y);
            meta.set_double("rim_softness", g.phantom.rim_softness);
            meta.set_double("amplitude_inside", g.phantom.amplitude_inside);
            meta.set_double("noise_sigma", sensor.noise_sigma);
            meta.set_u64("bit_depth", static_cast<std::uint64_t>(sensor.bit_depth));
            meta.set("config_hash", config_hash);

            const fs::path holo_path = out_dir / "holo" / (stem + ".pgm");
            save_hologram(holo, holo_path, meta);

            Sidecar truth_meta;
            truth_meta.set_u64("grain_id", g.id);
            truth_meta.set("label", to_string(g.label));
            truth_meta.set("config_hash", config_hash);
            const fs::path truth_path = out_dir / "truth" / (stem + ".f64");
            save_phase_map(truth, truth_path, truth_meta);

            if (emit_brightfield) {
                // |O|^2 as a 16-bit graymap: what a bright-field channel sees.
                Hologram bf;
                bf.grid = grid;
                bf.reference = ref;
                bf.intensity = RealImage(grid);
                for (std::size_t k = 0; k < object.values.size(); ++k)
                    bf.intensity.values[k] = std::norm(object.values[k]);
                save_hologram(bf, out_dir / "brightfield" / (stem + ".pgm"));
            }

            ManifestRow row;
            row.id = g.id;
            row.label = g.label;
            row.profile = g.phantom.profile;
            row.target_mean_phase = g.target_mean_phase;
            row.peak_phase = g.phantom.peak_phase;
            row.radius = g.phantom.radius;
            row.center_x = g.phantom.center_x;
            row.center_y = g.phantom.center_y;
            row.seed = g.seed;
            row.hologram = (fs::path("holo") / (stem + ".pgm")).string();
            row.truth_phase = (fs::path("truth") / (stem + ".f64")).string();
            result.manifest[i] = row;
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            result.report.failures.push_back({stem, e.what()});
        }
    });

    result.report.processed = grains.size() - result.report.failures.size();
    result.manifest_path = out_dir / "manifest.csv";
    save_manifest(result.manifest, result.manifest_path);
    return result;
}

// ---------------------------------------------------------------------------
// reconstruct

inline void save_trace_csv(const ReconTrace& trace, const fs::path& path) {
    CsvWriter csv(path);
    csv.row({"iteration", "c1", "c2", "total", "data_step", "tv_step", "rms_update"});
    for (const auto& r : trace.records)
        csv.row({std::to_string(r.iteration), CsvWriter::num_exact(r.c1),
                 CsvWriter::num_exact(r.c2), CsvWriter::num_exact(r.total),
                 CsvWriter::num_exact(r.data_step), CsvWriter::num_exact(r.tv_step),
                 CsvWriter::num_exact(r.rms_update)});
    csv.row({std::string("# status"), to_string(trace.status)});
}

struct ReconstructResult {
    StageReport report;
    std::vector<double> seconds_per_file; // parallel wall time per hologram
    std::vector<std::string> phase_files;
};

// Reconstructs each hologram file into a wrapped phase map under
// out_dir/recon. Sparse runs also write a per-hologram trace CSV.
inline ReconstructResult run_reconstruct(const Config& cfg, const fs::path& out_dir,
                                         const std::vector<fs::path>& holograms,
                                         const std::string& method_override, std::size_t workers) {
    const std::string method = method_from_config(cfg, method_override);
    const bool trust_sidecar = cfg.get_bool("reconstruct.trust_sidecar", true);
    const bool emit_field = cfg.get_bool("reconstruct.emit_field", false);
    const double radius_factor = cfg.get_double("reconstruct.filter_radius_factor", 0.6);
    const std::string filter_shape = cfg.get_string("reconstruct.filter_shape", "circular");
    if (filter_shape != "circular" && filter_shape != "gaussian")
        throw UsageError("unknown filter_shape '" + filter_shape + "'");
    const ReconConfig rconf = recon_from_config(cfg);
    const std::string config_hash = fnv1a_hex(cfg.canonical());

    fs::create_directories(out_dir / "recon");

    ReconstructResult result;
    result.seconds_per_file.assign(holograms.size(), 0.0);
    result.phase_files.assign(holograms.size(), "");
    std::mutex failure_mutex;

    detail::run_parallel(holograms.size(), workers, [&](std::size_t i) {
        const fs::path& hpath = holograms[i];
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const Hologram holo = load_hologram(hpath);
            const Sidecar holo_meta = Sidecar::load(sidecar_path(hpath));

            CarrierEstimate carrier;
            ReferenceWave ref = holo.reference;
            if (trust_sidecar) {
                carrier = {ref.fx, ref.fy, 0.0};
            } else {
                carrier = detect_carrier(holo);
                ref.fx = carrier.fx;
                ref.fy = carrier.fy;
                ref.phase_offset = 0.0;
            }
            FourierFilterSpec filter;
            filter.shape =
                filter_shape == "gaussian" ? FilterShape::gaussian : FilterShape::circular;
            filter.center = carrier;
            filter.radius = radius_factor * carrier_distance(carrier);
            filter.validate();

            ComplexField object;
            ReconStatus status = ReconStatus::converged;
            std::optional<ReconTrace> trace;
            if (method == "sparse") {
                FourierFilterSpec init_filter = filter;
                init_filter.radius =
                    std::min(rconf.init_filter_factor * carrier_distance(carrier),
                             carrier_distance(carrier) - dc_guard_radius - 1e-9);
                init_filter.validate();
                ComplexField warm = ft_reconstruct(holo, init_filter, ref);
                const ComplexField full_ref = reference_field(ref, holo.grid);
                ReconResult rr = reconstruct_sparse(holo, full_ref, rconf, std::move(warm));
                object = std::move(rr.object);
                status = rr.trace.status;
                trace = std::move(rr.trace);
            } else {
                object = ft_reconstruct(holo, filter, ref);
            }

            const std::string stem = hpath.stem().string();
            Sidecar meta;
            meta.set("method", method);
            meta.set("recon_status", to_string(status));
            meta.set_double("carrier_fx", carrier.fx);
            meta.set_double("carrier_fy", carrier.fy);
            meta.set_double("filter_radius", filter.radius);
            meta.set("filter_shape", filter_shape);
            meta.set("config_hash", config_hash);
            if (holo_meta.has("grain_id")) meta.set("grain_id", holo_meta.get("grain_id"));
            if (holo_meta.has("seed")) meta.set("seed", holo_meta.get("seed"));

            const fs::path phase_path = out_dir / "recon" / (stem + ".f64");
            save_phase_map(phase_of(object), phase_path, meta);
            result.phase_files[i] = phase_path.string();
            if (emit_field) save_complex_field(object, out_dir / "recon" / (stem + ".c128"), meta);
            if (trace) save_trace_csv(*trace, out_dir / "recon" / (stem + "_trace.csv"));

            if (status != ReconStatus::converged && status != ReconStatus::max_iterations)
                throw std::runtime_error(std::string("solver aborted: ") + to_string(status));
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            result.report.failures.push_back({hpath.string(), e.what()});
        }
        result.seconds_per_file[i] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });

    result.report.processed = holograms.size() - result.report.failures.size();
    return result;
}

// ---------------------------------------------------------------------------
// unwrap (standalone stage)

inline StageReport run_unwrap(const std::vector<fs::path>& files, const fs::path& out_dir,
                              std::size_t workers) {
    fs::create_directories(out_dir / "unwrapped");
    StageReport report;
    std::mutex failure_mutex;
    detail::run_parallel(files.size(), workers, [&](std::size_t i) {
        try {
            const PhaseMap wrapped = load_phase_map(files[i]);
            auto [unwrapped, rep] = unwrap2d(wrapped);
            Sidecar meta;
            meta.set_double("unwrap_residual_rms", rep.residual_rms);
            save_phase_map(unwrapped, out_dir / "unwrapped" / files[i].filename(), meta);
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            report.failures.push_back({files[i].string(), e.what()});
        }
    });
    report.processed = files.size() - report.failures.size();
    return report;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeInput {
    fs::path phase_file;
    std::size_t grain_id = 0;
    GrainLabel truth_label = GrainLabel::unknown;
    fs::path truth_phase; // optional
    double center_x = 0.0, center_y = 0.0, radius = 0.0; // for edge metrics; radius 0 = unknown
};

struct AnalyzeOptions {
    double threshold = default_classify_threshold;
    double bin_width = 0.5;
    std::optional<double> level; // segmentation level; auto when absent
    bool have_truth = false;
};

struct AnalyzeResult {
    StageReport report;
    std::vector<FeatureRecord> features;
    std::vector<PopulationStats> stats;
    std::optional<WelchResult> ttest;
    double accuracy = -1.0; // against truth labels; -1 when unavailable
    double mean_mask_rms = -1.0;
    double mean_edge_rms = -1.0;
};

namespace detail {

struct GrainMetrics {
    double unwrap_residual = -1.0;
    double mask_rms = -1.0;
    double edge_rms = -1.0;
};

// RMS of the wrapped difference over |r - radius| <= band.
inline double edge_band_rms(const PhaseMap& a, const PhaseMap& b, double cx, double cy, double R,
                            double band) {
    double acc = 0.0;
    std::size_t n = 0;
    const std::size_t w = a.grid.width, h = a.grid.height;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double r = std::sqrt(dx * dx + dy * dy);
            if (std::abs(r - R) > band) continue;
            const double d = wrap(a.values[y * w + x] - b.values[y * w + x]);
            acc += d * d;
            ++n;
        }
    return n ? std::sqrt(acc / static_cast<double>(n)) : -1.0;
}

inline double disc_rms(const PhaseMap& a, const PhaseMap& b, double cx, double cy, double R) {
    double acc = 0.0;
    std::size_t n = 0;
    const std::size_t w = a.grid.width, h = a.grid.height;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            if (dx * dx + dy * dy > R * R) continue;
            const double d = a.values[y * w + x] - b.values[y * w + x];
            acc += d * d;
            ++n;
        }
    return n ? std::sqrt(acc / static_cast<double>(n)) : -1.0;
}

} // namespace detail

inline AnalyzeResult run_analyze(const std::vector<AnalyzeInput>& inputs,
                                 const AnalyzeOptions& opts, const fs::path& out_dir,
                                 std::size_t workers) {
    fs::create_directories(out_dir / "unwrapped");

    AnalyzeResult result;
    result.features.assign(inputs.size(), FeatureRecord{});
    std::vector<detail::GrainMetrics> metrics(inputs.size());
    std::mutex failure_mutex;

    detail::run_parallel(inputs.size(), workers, [&](std::size_t i) {
        const AnalyzeInput& in = inputs[i];
        const std::string shown = detail::display_path(in.phase_file, out_dir);
        FeatureRecord rec;
        rec.grain_id = in.grain_id;
        rec.file = shown;
        rec.label = GrainLabel::unknown;
        try {
            PhaseMap phase = load_phase_map(in.phase_file);
            if (phase.wrapped) {
                auto [unwrapped, rep] = unwrap2d(phase);
                metrics[i].unwrap_residual = rep.residual_rms;
                phase = std::move(unwrapped);
                Sidecar meta;
                meta.set_u64("grain_id", in.grain_id);
                meta.set_double("unwrap_residual_rms", rep.residual_rms);
                save_phase_map(phase, out_dir / "unwrapped" / in.phase_file.filename(), meta);
            }

            if (!in.truth_phase.empty() && in.radius > 0.0) {
                const PhaseMap truth = load_phase_map(in.truth_phase);
                metrics[i].mask_rms =
                    detail::disc_rms(phase, truth, in.center_x, in.center_y, in.radius);
                metrics[i].edge_rms = detail::edge_band_rms(phase, truth, in.center_x, in.center_y,
                                                            in.radius, 3.0);
            }

            const PollenMask mask = segment(phase, opts.level);
            rec = extract_features(phase, mask, in.grain_id, opts.threshold);
            rec.file = shown;
            if (!(rec.mean_phase > 0.0))
                throw std::runtime_error("non-physical mean phase " +
                                         std::to_string(rec.mean_phase));
            // A near-empty grain whose unwrap left residues is a collapsed
            // wrap-around measurement, not a faint grain: honest low-phase
            // grains unwrap with ~zero residual.
            if (rec.mean_phase < 1.5 && metrics[i].unwrap_residual > 0.05)
                throw std::runtime_error("unreliable unwrap (residual " +
                                         std::to_string(metrics[i].unwrap_residual) +
                                         ") for near-zero mean phase " +
                                         std::to_string(rec.mean_phase));
        } catch (const std::exception& e) {
            rec = FeatureRecord{};
            rec.grain_id = in.grain_id;
            rec.file = shown;
            std::lock_guard<std::mutex> lock(failure_mutex);
            result.report.failures.push_back({shown, e.what()});
        }
        result.features[i] = rec;
    });
    result.report.processed = inputs.size() - result.report.failures.size();

    // features.csv
    {
        CsvWriter csv(out_dir / "features.csv");
        csv.row({"grain_id", "file", "area_px", "area_um2", "perimeter_um", "mean_phase",
                 "max_phase", "optical_volume", "label"});
        for (const auto& r : result.features) {
            if (r.label == GrainLabel::unknown) {
                csv.row({std::to_string(r.grain_id), r.file, "", "", "", "", "", "", "unknown"});
            } else {
                csv.row({std::to_string(r.grain_id), r.file, std::to_string(r.area_px),
                         CsvWriter::num(r.area_um2), CsvWriter::num(r.perimeter_um),
                         CsvWriter::num(r.mean_phase), CsvWriter::num(r.max_phase),
                         CsvWriter::num(r.optical_volume), to_string(r.label)});
            }
        }
    }

    // metrics.csv (unwrap residuals and, when truth is present, error norms)
    {
        CsvWriter csv(out_dir / "metrics.csv");
        csv.row({"grain_id", "file", "unwrap_residual_rms", "mask_rms", "edge_rms"});
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const auto& m = metrics[i];
            auto cell = [](double v) { return v >= 0.0 ? CsvWriter::num(v) : std::string(); };
            csv.row({std::to_string(inputs[i].grain_id),
                     detail::display_path(inputs[i].phase_file, out_dir),
                     cell(m.unwrap_residual), cell(m.mask_rms), cell(m.edge_rms)});
        }
    }

    // Class grouping: truth labels when available, else predicted.
    std::vector<FeatureRecord> grouped = result.features;
    if (opts.have_truth)
        for (std::size_t i = 0; i < grouped.size(); ++i)
            if (grouped[i].label != GrainLabel::unknown) grouped[i].label = inputs[i].truth_label;

    std::size_t usable = 0;
    for (const auto& r : grouped)
        if (r.label != GrainLabel::unknown) ++usable;

    // stats.csv with optional confusion matrix and accuracy
    {
        CsvWriter csv(out_dir / "stats.csv");
        csv.row({"class", "n", "mean", "std"});
        std::map<GrainLabel, std::vector<double>> groups;
        if (usable >= 2) {
            try {
                result.stats = population_stats(grouped);
            } catch (const std::exception&) {
                result.stats.clear();
            }
        }
        for (const auto& s : result.stats)
            csv.row({to_string(s.label), std::to_string(s.n), CsvWriter::num(s.mean),
                     CsvWriter::num(s.std)});

        if (opts.have_truth) {
            std::size_t tp = 0, fn = 0, fp = 0, tn = 0;
            std::size_t considered = 0;
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                const GrainLabel truth = inputs[i].truth_label;
                const GrainLabel pred = result.features[i].label;
                if (truth == GrainLabel::unknown || pred == GrainLabel::unknown) continue;
                ++considered;
                if (truth == GrainLabel::viable)
                    pred == GrainLabel::viable ? ++tp : ++fn;
                else
                    pred == GrainLabel::nonviable ? ++tn : ++fp;
            }
            if (considered > 0) {
                result.accuracy = static_cast<double>(tp + tn) / static_cast<double>(considered);
                csv.row({"confusion_viable_pred_viable", std::to_string(tp), "", ""});
                csv.row({"confusion_viable_pred_nonviable", std::to_string(fn), "", ""});
                csv.row({"confusion_nonviable_pred_viable", std::to_string(fp), "", ""});
                csv.row({"confusion_nonviable_pred_nonviable", std::to_string(tn), "", ""});
                csv.row({"accuracy", std::to_string(considered), CsvWriter::num(result.accuracy),
                         ""});
            }
        }
    }

    // ttest.csv
    {
        CsvWriter csv(out_dir / "ttest.csv");
        csv.row({"t", "dof", "p"});
        const PopulationStats* nonv = nullptr;
        const PopulationStats* viab = nullptr;
        for (const auto& s : result.stats) {
            if (s.label == GrainLabel::nonviable) nonv = &s;
            if (s.label == GrainLabel::viable) viab = &s;
        }
        if (nonv && viab) {
            result.ttest = welch_t(*nonv, *viab);
            csv.row({CsvWriter::num(result.ttest->t), CsvWriter::num(result.ttest->dof),
                     CsvWriter::num_exact(result.ttest->p)});
        }
    }

    // histogram.csv per class
    {
        CsvWriter csv(out_dir / "histogram.csv");
        csv.row({"bin_left", "bin_right", "density", "class"});
        for (const GrainLabel label : {GrainLabel::nonviable, GrainLabel::viable}) {
            std::vector<double> vals;
            for (const auto& r : grouped)
                if (r.label == label) vals.push_back(r.mean_phase);
            if (vals.empty()) continue;
            for (const auto& b : histogram(vals, opts.bin_width))
                csv.row({CsvWriter::num(b.left), CsvWriter::num(b.right),
                         CsvWriter::num(b.density), to_string(label)});
        }
    }

    // Mean error norms for the summary.
    double mask_acc = 0.0, edge_acc = 0.0;
    std::size_t mask_n = 0, edge_n = 0;
    for (const auto& m : metrics) {
        if (m.mask_rms >= 0.0) {
            mask_acc += m.mask_rms;
            ++mask_n;
        }
        if (m.edge_rms >= 0.0) {
            edge_acc += m.edge_rms;
            ++edge_n;
        }
    }
    if (mask_n) result.mean_mask_rms = mask_acc / static_cast<double>(mask_n);
    if (edge_n) result.mean_edge_rms = edge_acc / static_cast<double>(edge_n);
    return result;
}

// Build analyze inputs from a manifest and the recon output directory.
inline std::vector<AnalyzeInput> analyze_inputs_from_manifest(const std::vector<ManifestRow>& rows,
                                                              const fs::path& out_dir) {
    std::vector<AnalyzeInput> inputs;
    inputs.reserve(rows.size());
    for (const auto& r : rows) {
        AnalyzeInput in;
        const std::string stem = fs::path(r.hologram).stem().string();
        in.phase_file = out_dir / "recon" / (stem + ".f64");
        in.grain_id = r.id;
        in.truth_label = r.label;
        in.truth_phase = r.truth_phase.empty() ? fs::path() : out_dir / r.truth_phase;
        in.center_x = r.center_x;
        in.center_y = r.center_y;
        in.radius = r.radius;
        inputs.push_back(in);
    }
    return inputs;
}

// ---------------------------------------------------------------------------
// pipeline

struct PipelineResult {
    StageReport simulate;
    StageReport reconstruct;
    AnalyzeResult analyze;
    std::string method;
    double seconds_total = 0.0;
    fs::path summary_path;

    bool ok() const {
        return simulate.ok() && reconstruct.ok() && analyze.report.ok();
    }
};

inline PipelineResult run_pipeline(const Config& cfg, const fs::path& out_dir, std::uint64_t seed,
                                   const std::string& method_override, std::size_t workers) {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineResult result;
    result.method = method_from_config(cfg, method_override);

    SimulateResult sim = run_simulate(cfg, out_dir, seed, workers);
    result.simulate = sim.report;

    std::vector<fs::path> holograms;
    holograms.reserve(sim.manifest.size());
    for (const auto& r : sim.manifest) holograms.push_back(out_dir / r.hologram);
    ReconstructResult rec = run_reconstruct(cfg, out_dir, holograms, result.method, workers);
    result.reconstruct = rec.report;

    AnalyzeOptions opts;
    opts.threshold = cfg.get_double("analyze.threshold", default_classify_threshold);
    opts.bin_width = cfg.get_double("analyze.bin_width", 0.5);
    const std::string level = cfg.get_string("analyze.level", "auto");
    if (level != "auto") opts.level = std::stod(level);
    opts.have_truth = true;
    result.analyze =
        run_analyze(analyze_inputs_from_manifest(sim.manifest, out_dir), opts, out_dir, workers);

    result.seconds_total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::ostringstream summary;
    summary << "corpus_size: " << sim.manifest.size() << "\n";
    summary << "method: " << result.method << "\n";
    summary << "simulate_failures: " << result.simulate.failures.size() << "\n";
    summary << "reconstruct_failures: " << result.reconstruct.failures.size() << "\n";
    summary << "analyze_failures: " << result.analyze.report.failures.size() << "\n";
    for (const auto& s : result.analyze.stats)
        summary << "class_" << to_string(s.label) << ": n=" << s.n << " mean=" << s.mean
                << " std=" << s.std << "\n";
    if (result.analyze.accuracy >= 0.0) summary << "accuracy: " << result.analyze.accuracy << "\n";
    if (result.analyze.ttest) {
        summary << "welch_t: " << result.analyze.ttest->t << "\n";
        summary << "welch_dof: " << result.analyze.ttest->dof << "\n";
        summary << "welch_p: " << result.analyze.ttest->p << "\n";
    }
    if (result.analyze.mean_mask_rms >= 0.0)
        summary << "mean_mask_rms: " << result.analyze.mean_mask_rms << "\n";
    if (result.analyze.mean_edge_rms >= 0.0)
        summary << "mean_edge_rms: " << result.analyze.mean_edge_rms << "\n";
    summary << "seconds_total: " << result.seconds_total << "\n";

    result.summary_path = out_dir / "summary.txt";
    std::ofstream out(result.summary_path);
    out << summary.str();
    return result;
}

// ---------------------------------------------------------------------------
// bench

struct BenchResult {
    StageReport report;
    fs::path csv_path;
};

inline BenchResult run_bench(const Config& cfg, const fs::path& out_dir, std::uint64_t seed,
                             const std::string& method_override, std::size_t workers) {
    BenchResult result;
    const std::string method = method_from_config(cfg, method_override);

    const auto t0 = std::chrono::steady_clock::now();
    SimulateResult sim = run_simulate(cfg, out_dir, seed, workers);
    const double sim_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<fs::path> holograms;
    for (const auto& r : sim.manifest) holograms.push_back(out_dir / r.hologram);
    const auto t1 = std::chrono::steady_clock::now();
    ReconstructResult rec = run_reconstruct(cfg, out_dir, holograms, method, workers);
    const double rec_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();

    AnalyzeOptions opts;
    opts.threshold = cfg.get_double("analyze.threshold", default_classify_threshold);
    opts.bin_width = cfg.get_double("analyze.bin_width", 0.5);
    opts.have_truth = true;
    const auto t2 = std::chrono::steady_clock::now();
    AnalyzeResult an =
        run_analyze(analyze_inputs_from_manifest(sim.manifest, out_dir), opts, out_dir, workers);
    const double an_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t2).count();

    result.csv_path = out_dir / "bench.csv";
    CsvWriter csv(result.csv_path);
    csv.row({"stage", "file", "seconds"});
    csv.row({"simulate", "*", CsvWriter::num(sim_s)});
    for (std::size_t i = 0; i < holograms.size(); ++i)
        csv.row({"reconstruct", holograms[i].filename().string(),
                 CsvWriter::num(rec.seconds_per_file[i])});
    csv.row({"reconstruct", "*", CsvWriter::num(rec_s)});
    csv.row({"analyze", "*", CsvWriter::num(an_s)});

    result.report.processed = sim.report.processed;
    for (const auto& f : sim.report.failures) result.report.failures.push_back(f);
    for (const auto& f : rec.report.failures) result.report.failures.push_back(f);
    for (const auto& f : an.report.failures) result.report.failures.push_back(f);
    return result;
}

} // namespace qpi
