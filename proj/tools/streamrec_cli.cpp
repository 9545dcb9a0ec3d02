// Command-line front end: ingest (build a dataset cache), run (single
// experiment), sweep (grid over config keys), report (compare finished runs).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "streamrec/streamrec.hpp"

namespace fs = std::filesystem;
using namespace streamrec;

namespace {

RunSpec load_spec(const std::string& config_path) {
    if (config_path.empty()) return RunSpec{};
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config file '" + config_path + "'");
    return parse_run_spec(in);
}

void apply_overrides(RunSpec& spec, const std::vector<std::string>& overrides) {
    for (const std::string& kv : overrides) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override '" + kv + "' is not key=value");
        apply_key(spec, kv.substr(0, eq), kv.substr(eq + 1));
    }
}

struct SweepAxis {
    std::string key;
    std::vector<std::string> values;
};

SweepAxis parse_axis(const std::string& text) {
    std::size_t eq = text.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("sweep axis '" + text + "' is not key=v1,v2,...");
    SweepAxis axis;
    axis.key = text.substr(0, eq);
    std::istringstream in(text.substr(eq + 1));
    std::string tok;
    while (std::getline(in, tok, ','))
        if (!tok.empty()) axis.values.push_back(tok);
    if (axis.values.empty())
        throw std::invalid_argument("sweep axis '" + text + "' lists no values");
    return axis;
}

int cmd_ingest(const std::string& dataset, const std::string& out, const std::string& delim,
               std::size_t subsample, std::uint64_t seed) {
    std::vector<RawRecord> records = parse_ratings_file(dataset, delim);
    if (subsample > 0) records = subsample_users(std::move(records), subsample, seed);
    Dataset ds = preprocess(records);
    std::ofstream cache(out, std::ios::binary);
    if (!cache) throw std::runtime_error("cannot write cache file '" + out + "'");
    save_dataset_cache(ds, cache);
    std::cout << "cached " << ds.interactions.size() << " interactions, " << ds.num_users
              << " users, " << ds.num_items << " items -> " << out << "\n";
    return 0;
}

int cmd_run(RunSpec spec) {
    spec.validate();
    if (spec.dataset_path.empty()) throw std::invalid_argument("missing --dataset");
    if (spec.out_dir.empty()) throw std::invalid_argument("missing --out");
    int status = run_experiment(spec);
    if (status == 0) {
        fs::path summary = (spec.repeats == 1) ? fs::path(spec.out_dir) / "summary.json"
                                               : fs::path(spec.out_dir) / "median_summary.json";
        RunSummary s = read_summary_file(summary.string());
        std::cout << comparison_table({s});
    } else {
        std::cerr << "run failed; see MANIFEST in " << spec.out_dir << "\n";
    }
    return status;
}

int cmd_sweep(RunSpec base, const std::vector<std::string>& axes_text) {
    if (base.dataset_path.empty()) throw std::invalid_argument("missing --dataset");
    if (base.out_dir.empty()) throw std::invalid_argument("missing --out");
    std::vector<SweepAxis> axes;
    for (const auto& t : axes_text) axes.push_back(parse_axis(t));
    if (axes.empty()) throw std::invalid_argument("sweep needs at least one key=v1,v2 axis");

    std::vector<std::vector<std::size_t>> combos{{}};
    for (const auto& axis : axes) {
        std::vector<std::vector<std::size_t>> next;
        for (const auto& c : combos)
            for (std::size_t i = 0; i < axis.values.size(); ++i) {
                auto cc = c;
                cc.push_back(i);
                next.push_back(cc);
            }
        combos = next;
    }

    int worst = 0;
    std::vector<RunSummary> summaries;
    for (const auto& combo : combos) {
        RunSpec spec = base;
        std::string tag;
        for (std::size_t a = 0; a < axes.size(); ++a) {
            apply_key(spec, axes[a].key, axes[a].values[combo[a]]);
            if (!tag.empty()) tag += "_";
            tag += axes[a].key + "=" + axes[a].values[combo[a]];
        }
        spec.label = base.label + "_" + tag;
        spec.out_dir = (fs::path(base.out_dir) / tag).string();
        std::cout << "== " << spec.label << "\n";
        int status = run_experiment(spec);
        worst = std::max(worst, status);
        if (status == 0) {
            fs::path summary = (spec.repeats == 1)
                                   ? fs::path(spec.out_dir) / "summary.json"
                                   : fs::path(spec.out_dir) / "median_summary.json";
            summaries.push_back(read_summary_file(summary.string()));
        }
    }
    if (!summaries.empty()) std::cout << "\n" << comparison_table(summaries);
    return worst;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& csv_out) {
    std::vector<RunSummary> summaries;
    for (const auto& dir : run_dirs) {
        fs::path p(dir);
        fs::path file = p / "summary.json";
        if (!fs::exists(file)) file = p / "median_summary.json";
        if (!fs::exists(file))
            throw std::runtime_error("no summary.json or median_summary.json in '" + dir + "'");
        summaries.push_back(read_summary_file(file.string()));
    }
    std::cout << comparison_table(summaries);
    if (!csv_out.empty()) {
        std::ofstream out(csv_out);
        if (!out) throw std::runtime_error("cannot write '" + csv_out + "'");
        out << comparison_csv(summaries);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming recommender workbench"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "parse a ratings file into a binary cache");
    std::string in_dataset, in_out, in_delim = "::";
    std::size_t in_subsample = 0;
    std::uint64_t in_seed = 42;
    ingest->add_option("--dataset", in_dataset, "ratings file (user<d>item<d>rating<d>ts)")
        ->required();
    ingest->add_option("--out", in_out, "cache file to write")->required();
    ingest->add_option("--delim", in_delim, "field delimiter (default ::)");
    ingest->add_option("--subsample-users", in_subsample, "keep only K uniformly chosen users");
    ingest->add_option("--seed", in_seed, "subsampling seed");

    // shared run/sweep options
    auto add_run_options = [](CLI::App* cmd, std::string& config_path, RunSpec& flags,
                              std::vector<std::string>& overrides, bool& seed_set,
                              std::uint64_t& seed) {
        cmd->add_option("--config", config_path, "key=value config file");
        cmd->add_option("--dataset", flags.dataset_path, "ratings file or dataset cache");
        cmd->add_option("--out", flags.out_dir, "output directory");
        cmd->add_option("--label", flags.label, "run label for reports");
        cmd->add_option("--repeats", flags.repeats, "seeds per run (seed, seed+1, ...)");
        cmd->add_option("--workers", flags.workers, "parallel training workers (1 = serial)");
        cmd->add_option("--subsample-users", flags.subsample_users,
                        "keep only K uniformly chosen users");
        cmd->add_option("--seed", seed, "base rng seed")->each([&seed_set](const std::string&) {
            seed_set = true;
        });
        cmd->add_option("overrides", overrides, "key=value overrides of any config field");
    };

    auto* run = app.add_subcommand("run", "run one experiment");
    std::string run_config;
    RunSpec run_flags;
    std::vector<std::string> run_overrides;
    bool run_seed_set = false;
    std::uint64_t run_seed = 0;
    add_run_options(run, run_config, run_flags, run_overrides, run_seed_set, run_seed);

    auto* sweep = app.add_subcommand("sweep", "grid of experiments over config keys");
    std::string sweep_config;
    RunSpec sweep_flags;
    std::vector<std::string> sweep_overrides;
    bool sweep_seed_set = false;
    std::uint64_t sweep_seed = 0;
    std::vector<std::string> sweep_axes;
    add_run_options(sweep, sweep_config, sweep_flags, sweep_overrides, sweep_seed_set, sweep_seed);
    sweep->add_option("--sweep", sweep_axes, "axis key=v1,v2,... (repeatable)")->required();

    auto* report = app.add_subcommand("report", "compare finished runs");
    std::vector<std::string> report_dirs;
    std::string report_csv;
    report->add_option("dirs", report_dirs, "run directories with summary.json")->required();
    report->add_option("--csv", report_csv, "also write the comparison as CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) return cmd_ingest(in_dataset, in_out, in_delim, in_subsample, in_seed);

        auto assemble = [](const std::string& config_path, const RunSpec& flags,
                           const std::vector<std::string>& overrides, bool seed_set,
                           std::uint64_t seed) {
            RunSpec spec = load_spec(config_path);
            if (!flags.dataset_path.empty()) spec.dataset_path = flags.dataset_path;
            if (!flags.out_dir.empty()) spec.out_dir = flags.out_dir;
            if (flags.label != "run") spec.label = flags.label;
            if (flags.repeats != 1) spec.repeats = flags.repeats;
            if (flags.workers != 1) spec.workers = flags.workers;
            if (flags.subsample_users != 0) spec.subsample_users = flags.subsample_users;
            if (seed_set) spec.config.rng_seed = seed;
            apply_overrides(spec, overrides);
            return spec;
        };

        if (run->parsed())
            return cmd_run(assemble(run_config, run_flags, run_overrides, run_seed_set, run_seed));
        if (sweep->parsed())
            return cmd_sweep(
                assemble(sweep_config, sweep_flags, sweep_overrides, sweep_seed_set, sweep_seed),
                sweep_axes);
        if (report->parsed()) return cmd_report(report_dirs, report_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
