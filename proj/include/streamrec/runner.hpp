#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "streamrec/harness.hpp"
#include "streamrec/ingest.hpp"
#include "streamrec/report.hpp"

namespace streamrec {

struct RunResult {
    RunAggregate aggregate;
    std::vector<IterationMetrics> records;
    Warnings warnings;
};

/*!
 * One full experiment on an already-loaded dataset: chronological split,
 * incremental training over the training stream, then the prequential
 * test-then-train loop over the test stream.
 */
inline RunResult run_single(const ExperimentConfig& cfg, const Dataset& ds,
                            std::size_t workers = 1, std::ostream* csv = nullptr) {
    auto [training, test] = chronological_split(ds, cfg.train_fraction);
    SystemState state(cfg, ds.num_users, ds.num_items);
    run_training_phase(state, training, workers);
    RunResult result;
    result.records = run_prequential_phase(state, test, workers, csv);
    result.aggregate = aggregate(result.records);
    result.warnings = state.warnings;
    return result;
}

namespace detail {

inline void write_manifest(const std::filesystem::path& dir, const std::string& status,
                           const std::string& failure_point, const RunSpec& spec,
                           std::uint64_t seed) {
    std::ofstream out(dir / "MANIFEST");
    out << "status=" << status << "\n";
    if (!failure_point.empty()) out << "failed_at=" << failure_point << "\n";
    out << "label=" << spec.label << "\n";
    out << "seed=" << seed << "\n";
}

}  // namespace detail

/*!
 * Filesystem-facing experiment driver: ingest, train, prequential test,
 * then metrics.csv, summary.json and a MANIFEST in the output directory.
 * repeats > 1 reruns with seeds seed, seed+1, ... into seed_* subdirectories
 * plus a median_summary.json at the top. Partial artifacts survive a failed
 * run, with the MANIFEST naming the failure point.
 */
inline int run_experiment(const RunSpec& spec) {
    namespace fs = std::filesystem;
    spec.validate();
    fs::path out_root(spec.out_dir);
    fs::create_directories(out_root);

    std::string phase = "ingest";
    try {
        Dataset ds =
            load_dataset(spec.dataset_path, "::", spec.subsample_users, spec.config.rng_seed);
        std::vector<RunSummary> per_seed;
        for (std::size_t rep = 0; rep < spec.repeats; ++rep) {
            ExperimentConfig cfg = spec.config;
            cfg.rng_seed = spec.config.rng_seed + rep;
            fs::path dir = (spec.repeats == 1)
                               ? out_root
                               : out_root / ("seed_" + std::to_string(cfg.rng_seed));
            fs::create_directories(dir);
            phase = "run(seed=" + std::to_string(cfg.rng_seed) + ")";
            try {
                std::ofstream csv(dir / "metrics.csv");
                RunResult result = run_single(cfg, ds, spec.workers, &csv);
                RunSummary summary;
                summary.label = spec.label;
                summary.seed = cfg.rng_seed;
                summary.num_models = cfg.num_models;
                summary.top_k = cfg.top_k;
                summary.aggregate = result.aggregate;
                summary.degenerate_new_batches = result.warnings.degenerate_new_batches;
                summary.negative_shortfall = result.warnings.negative_shortfall;
                RunSpec echo = spec;
                echo.config = cfg;
                summary.config_echo = serialize_run_spec(echo);
                write_summary_file(summary, (dir / "summary.json").string());
                detail::write_manifest(dir, "ok", "", spec, cfg.rng_seed);
                per_seed.push_back(std::move(summary));
            } catch (...) {
                detail::write_manifest(dir, "failed", phase, spec, cfg.rng_seed);
                throw;
            }
        }
        if (spec.repeats > 1) {
            RunSummary median = median_summary(per_seed);
            write_summary_file(median, (out_root / "median_summary.json").string());
            detail::write_manifest(out_root, "ok", "", spec, spec.config.rng_seed);
        }
        return 0;
    } catch (const std::exception& e) {
        detail::write_manifest(out_root, "failed", phase + ": " + e.what(), spec,
                               spec.config.rng_seed);
        return 1;
    }
}

}  // namespace streamrec
