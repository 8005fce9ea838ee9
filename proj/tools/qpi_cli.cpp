// pollen-qpi command line front door.
//
//   qpi simulate    render a synthetic hologram corpus + ground truth
//   qpi reconstruct recover wrapped phase maps (fourier | sparse)
//   qpi unwrap      unwrap wrapped phase map files
//   qpi analyze     segment, extract features, stats, t-test, histogram
//   qpi pipeline    simulate + reconstruct + analyze end to end
//   qpi bench       pipeline with per-stage and per-hologram timings
//
// Exit codes: 0 success, 1 partial batch failure, 2 usage/config error.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "qpi/qpi.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = "qpi_out";
    std::uint64_t seed = 1;
    std::size_t workers = 0;
    std::string method; // empty = from config
    double threshold = -1.0;

    qpi::Config load_config() const {
        qpi::Config cfg;
        if (!config_path.empty()) cfg = qpi::Config::load(config_path);
        if (threshold >= 0.0) cfg.set("analyze.threshold", qpi::format_double(threshold));
        return cfg;
    }

    std::size_t resolved_workers() const {
        if (workers > 0) return workers;
        const unsigned hw = std::thread::hardware_concurrency();
        return hw > 0 ? hw : 1;
    }
};

void add_global_flags(CLI::App* cmd, GlobalArgs& g) {
    cmd->add_option("--config", g.config_path, "pipeline config file (key = value sections)");
    cmd->add_option("--seed", g.seed, "global seed for deterministic generation");
    cmd->add_option("--out", g.out_dir, "output directory");
    cmd->add_option("--workers", g.workers, "parallel workers (0 = hardware)");
    cmd->add_option("--threshold", g.threshold, "classification threshold, radians");
}

int report_failures(const qpi::StageReport& report, const char* stage) {
    for (const auto& f : report.failures)
        std::fprintf(stderr, "[%s] %s: %s\n", stage, f.file.c_str(), f.message.c_str());
    return report.ok() ? 0 : 1;
}

std::vector<fs::path> to_paths(const std::vector<std::string>& args) {
    std::vector<fs::path> out;
    out.reserve(args.size());
    for (const auto& a : args) out.emplace_back(a);
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantitative phase imaging toolkit for pollen viability"};
    app.require_subcommand(1);

    GlobalArgs g;
    std::vector<std::string> file_args;
    std::string manifest_path;

    auto* sim = app.add_subcommand("simulate", "render synthetic holograms and ground truth");
    add_global_flags(sim, g);

    auto* rec = app.add_subcommand("reconstruct", "reconstruct holograms into wrapped phase maps");
    add_global_flags(rec, g);
    rec->add_option("--method", g.method, "fourier | sparse");
    rec->add_option("files", file_args, "hologram files (default: manifest in --out)");

    auto* unw = app.add_subcommand("unwrap", "unwrap wrapped phase map files");
    add_global_flags(unw, g);
    unw->add_option("files", file_args, "wrapped phase map files")->required();

    auto* ana = app.add_subcommand("analyze", "features, stats, t-test and histogram CSVs");
    add_global_flags(ana, g);
    ana->add_option("--manifest", manifest_path, "manifest with truth labels");
    ana->add_option("--bins", "histogram bin width, radians"); // parsed via config override below
    ana->add_option("files", file_args, "phase map files (default: recon outputs in --out)");

    auto* pipe = app.add_subcommand("pipeline", "simulate + reconstruct + analyze");
    add_global_flags(pipe, g);
    pipe->add_option("--method", g.method, "fourier | sparse");

    auto* bench = app.add_subcommand("bench", "pipeline with stage/per-hologram timings");
    add_global_flags(bench, g);
    bench->add_option("--method", g.method, "fourier | sparse");

    double bins_override = -1.0;
    ana->get_option("--bins")->each([&bins_override](const std::string& s) {
        bins_override = std::stod(s);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 2;
    }

    try {
        const qpi::Config cfg = g.load_config();
        const fs::path out_dir = g.out_dir;
        const std::size_t workers = g.resolved_workers();
        fs::create_directories(out_dir);

        if (sim->parsed()) {
            auto result = qpi::run_simulate(cfg, out_dir, g.seed, workers);
            std::printf("simulated %zu grains -> %s\n", result.report.processed,
                        result.manifest_path.string().c_str());
            return report_failures(result.report, "simulate");
        }

        if (rec->parsed()) {
            std::vector<fs::path> holograms = to_paths(file_args);
            if (holograms.empty()) {
                for (const auto& row : qpi::load_manifest(out_dir / "manifest.csv"))
                    holograms.push_back(out_dir / row.hologram);
            }
            auto result = qpi::run_reconstruct(cfg, out_dir, holograms, g.method, workers);
            std::printf("reconstructed %zu/%zu holograms\n", result.report.processed,
                        holograms.size());
            return report_failures(result.report, "reconstruct");
        }

        if (unw->parsed()) {
            auto report = qpi::run_unwrap(to_paths(file_args), out_dir, workers);
            std::printf("unwrapped %zu/%zu maps\n", report.processed, file_args.size());
            return report_failures(report, "unwrap");
        }

        if (ana->parsed()) {
            qpi::AnalyzeOptions opts;
            opts.threshold = cfg.get_double("analyze.threshold", qpi::default_classify_threshold);
            opts.bin_width =
                bins_override > 0.0 ? bins_override : cfg.get_double("analyze.bin_width", 0.5);
            const std::string level = cfg.get_string("analyze.level", "auto");
            if (level != "auto") opts.level = std::stod(level);

            std::vector<qpi::AnalyzeInput> inputs;
            if (!manifest_path.empty()) {
                opts.have_truth = true;
                const auto rows = qpi::load_manifest(manifest_path);
                const fs::path base = fs::path(manifest_path).parent_path();
                inputs = qpi::analyze_inputs_from_manifest(rows, base);
            } else if (!file_args.empty()) {
                std::size_t id = 0;
                for (const auto& f : file_args) {
                    qpi::AnalyzeInput in;
                    in.phase_file = f;
                    in.grain_id = id++;
                    inputs.push_back(in);
                }
            } else {
                opts.have_truth = true;
                const auto rows = qpi::load_manifest(out_dir / "manifest.csv");
                inputs = qpi::analyze_inputs_from_manifest(rows, out_dir);
            }
            auto result = qpi::run_analyze(inputs, opts, out_dir, workers);
            std::printf("analyzed %zu/%zu phase maps\n", result.report.processed, inputs.size());
            for (const auto& s : result.stats)
                std::printf("  %s: n=%zu mean=%.4f std=%.4f\n", qpi::to_string(s.label), s.n,
                            s.mean, s.std);
            if (result.ttest)
                std::printf("  welch t=%.4f dof=%.2f p=%.6g\n", result.ttest->t, result.ttest->dof,
                            result.ttest->p);
            if (result.accuracy >= 0.0) std::printf("  accuracy=%.4f\n", result.accuracy);
            return report_failures(result.report, "analyze");
        }

        if (pipe->parsed()) {
            auto result = qpi::run_pipeline(cfg, out_dir, g.seed, g.method, workers);
            std::ifstream summary(result.summary_path);
            std::cout << summary.rdbuf();
            int code = 0;
            code |= report_failures(result.simulate, "simulate");
            code |= report_failures(result.reconstruct, "reconstruct");
            code |= report_failures(result.analyze.report, "analyze");
            return code;
        }

        if (bench->parsed()) {
            auto result = qpi::run_bench(cfg, out_dir, g.seed, g.method, workers);
            std::printf("bench -> %s\n", result.csv_path.string().c_str());
            return report_failures(result.report, "bench");
        }
    } catch (const qpi::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        // Configuration problems are usage errors; runtime failures are not.
        if (msg.find("config") != std::string::npos) {
            std::fprintf(stderr, "config error: %s\n", msg.c_str());
            return 2;
        }
        std::fprintf(stderr, "error: %s\n", msg.c_str());
        return 1;
    }
    return 0;
}
