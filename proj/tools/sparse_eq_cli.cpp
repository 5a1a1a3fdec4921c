#include "sparse_eq.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace sparse_eq;

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumeric = 3, kIo = 4 };

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Written to <path>.partial first, then renamed into place.
void write_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out << content;
        out.flush();
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

nlohmann::json timing_json(const StageTimes& t, double sim, double wall) {
    return {{"factorization_s", t.factorization},
            {"omp_s", t.omp},
            {"evaluation_s", t.evaluation},
            {"simulation_s", sim},
            {"wall_s", wall}};
}

int run(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    auto wall = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
    const fs::path base = fs::path(cfg.out_dir) / cfg.prefix;
    auto with_ext = [&](const std::string& ext) { return fs::path(base.string() + ext); };

    nlohmann::json summary;
    summary["schema_version"] = Table::schema_version;
    summary["config"] = config_echo(cfg);

    if (cfg.experiment == "design-dump") {
        StageTimes times;
        summary["result"] = run_design_dump(cfg, &times);
        write_atomic(with_ext(".json"), summary.dump(2) + "\n");
        write_atomic(with_ext(".timing.json"), timing_json(times, 0.0, wall()).dump(2) + "\n");
        std::cout << with_ext(".json").string() << "\n";
        return kOk;
    }

    MonteCarloResult res;
    if (cfg.experiment == "ser-sweep")
        res = run_ser_experiment(cfg);
    else if (cfg.experiment == "circulant-gap")
        res = run_circulant_gap_experiment(cfg);
    else if (cfg.experiment == "taps-vs-loss")
        res = run_taps_vs_loss_experiment(cfg);
    else
        res = run_coherence_sweep(cfg);

    summary["realizations"] = res.realizations;
    summary["warmup_symbols"] = res.warmup_symbols;
    summary["columns"] = res.table.columns;
    summary["rows"] = res.table.to_json();
    if (!res.extra.empty()) summary["extra"] = res.extra;

    write_atomic(with_ext(".csv"), res.table.to_csv());
    write_atomic(with_ext(".json"), summary.dump(2) + "\n");
    write_atomic(with_ext(".timing.json"), timing_json(res.times, res.simulation_seconds, wall()).dump(2) + "\n");
    std::cout << with_ext(".csv").string() << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse FIR equalizer design and Monte-Carlo experiments"};
    std::string experiment, config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    app.add_option("experiment", experiment, "coherence-sweep | taps-vs-loss | ser-sweep | circulant-gap | design-dump")
        ->required()
        ->check(CLI::IsMember(experiment_names()));
    app.add_option("--config", config_path, "TOML (or .json) experiment config")->required();
    app.add_option("--out", out_dir, "output directory (overrides [output].dir)");
    app.add_option("--seed", seed, "master seed (overrides config)");
    app.add_option("--threads", threads, "worker threads (overrides [run].threads)")->check(CLI::Range(1, 1024));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    ExperimentConfig cfg;
    try {
        cfg = parse_config(config_path);
        if (cfg.experiment != experiment)
            throw ConfigError("config declares experiment '" + cfg.experiment + "' but '" + experiment + "' was requested");
        if (seed) cfg.seed = *seed;
        if (threads) cfg.threads = *threads;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    }

    try {
        return run(cfg);
    } catch (const NumericDegeneracy& e) {
        std::cerr << "numeric error: " << e.what() << " (index " << e.index() << ")\n";
        return kNumeric;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumeric;
    }
}
