#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "streamrec/config.hpp"
#include "streamrec/metrics.hpp"

namespace streamrec {

//! Aggregate results of one completed run, as persisted in summary.json.
struct RunSummary {
    std::string label;
    std::uint64_t seed = 0;
    std::size_t num_models = 0;
    std::size_t top_k = 10;
    RunAggregate aggregate;
    std::size_t degenerate_new_batches = 0;  // sampler fell back to reservoir-only
    std::size_t negative_shortfall = 0;      // negatives dropped for saturated users
    std::string config_echo;  // serialized RunSpec for auditability
};

inline nlohmann::json summary_to_json(const RunSummary& s) {
    nlohmann::json j;
    j["label"] = s.label;
    j["seed"] = s.seed;
    j["num_models"] = s.num_models;
    j["top_k"] = s.top_k;
    j["metrics"] = {
        {"hr_fused", s.aggregate.hr_fused},
        {"ndcg_fused", s.aggregate.ndcg_fused},
        {"hr_model", s.aggregate.hr_model},
        {"ndcg_model", s.aggregate.ndcg_model},
        {"n_test", s.aggregate.n_test},
        {"iterations", s.aggregate.iterations},
    };
    j["warnings"] = {
        {"degenerate_new_batches", s.degenerate_new_batches},
        {"negative_shortfall", s.negative_shortfall},
    };
    j["config"] = s.config_echo;
    return j;
}

inline RunSummary summary_from_json(const nlohmann::json& j) {
    RunSummary s;
    s.label = j.at("label").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.num_models = j.at("num_models").get<std::size_t>();
    s.top_k = j.at("top_k").get<std::size_t>();
    const auto& m = j.at("metrics");
    s.aggregate.hr_fused = m.at("hr_fused").get<double>();
    s.aggregate.ndcg_fused = m.at("ndcg_fused").get<double>();
    s.aggregate.hr_model = m.at("hr_model").get<std::vector<double>>();
    s.aggregate.ndcg_model = m.at("ndcg_model").get<std::vector<double>>();
    s.aggregate.n_test = m.at("n_test").get<std::size_t>();
    s.aggregate.iterations = m.at("iterations").get<std::size_t>();
    if (j.contains("warnings")) {
        s.degenerate_new_batches = j["warnings"].value("degenerate_new_batches", 0ul);
        s.negative_shortfall = j["warnings"].value("negative_shortfall", 0ul);
    }
    s.config_echo = j.value("config", std::string{});
    return s;
}

inline void write_summary_file(const RunSummary& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write summary file '" + path + "'");
    out << summary_to_json(s).dump(2) << "\n";
}

inline RunSummary read_summary_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing summary file '" + path + "'");
    nlohmann::json j;
    in >> j;
    return summary_from_json(j);
}

//! Median element of each metric across per-seed summaries (lower median
//! for even counts). Per-model vectors take per-entry medians.
inline RunSummary median_summary(std::vector<RunSummary> per_seed) {
    if (per_seed.empty()) throw std::invalid_argument("median over no summaries");
    auto med = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[(v.size() - 1) / 2];
    };
    RunSummary out = per_seed.front();
    std::vector<double> hr, ndcg;
    for (const auto& s : per_seed) {
        hr.push_back(s.aggregate.hr_fused);
        ndcg.push_back(s.aggregate.ndcg_fused);
    }
    out.aggregate.hr_fused = med(hr);
    out.aggregate.ndcg_fused = med(ndcg);
    for (std::size_t k = 0; k < out.aggregate.hr_model.size(); ++k) {
        std::vector<double> hm, nm;
        for (const auto& s : per_seed) {
            hm.push_back(s.aggregate.hr_model[k]);
            nm.push_back(s.aggregate.ndcg_model[k]);
        }
        out.aggregate.hr_model[k] = med(hm);
        out.aggregate.ndcg_model[k] = med(nm);
    }
    out.label += "_median";
    return out;
}

//! Relative gain of a over b in percent.
inline double improvement_percent(double a, double b) {
    if (b == 0.0) return 0.0;
    return (a / b - 1.0) * 100.0;
}

/*!
 * Aligned comparison of runs: HR@K and NDCG@K per label, plus the relative
 * improvement of the first-listed run over each other run.
 */
inline std::string comparison_table(const std::vector<RunSummary>& runs) {
    if (runs.empty()) throw std::invalid_argument("comparison over no runs");
    std::size_t k = runs.front().top_k;
    std::size_t width = 5;
    for (const auto& r : runs) width = std::max(width, r.label.size());
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width + 2)) << "label" << std::right
        << std::setw(10) << ("hr@" + std::to_string(k)) << std::setw(10)
        << ("ndcg@" + std::to_string(k));
    if (runs.size() > 1) out << std::setw(12) << "hr_gain" << std::setw(12) << "ndcg_gain";
    out << "\n";
    const RunSummary& first = runs.front();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const RunSummary& r = runs[i];
        out << std::left << std::setw(static_cast<int>(width + 2)) << r.label << std::right
            << std::fixed << std::setprecision(4) << std::setw(10) << r.aggregate.hr_fused
            << std::setw(10) << r.aggregate.ndcg_fused;
        if (runs.size() > 1) {
            if (i == 0) {
                out << std::setw(12) << "--" << std::setw(12) << "--";
            } else {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%+.1f%%",
                              improvement_percent(first.aggregate.hr_fused, r.aggregate.hr_fused));
                out << std::setw(12) << buf;
                std::snprintf(
                    buf, sizeof buf, "%+.1f%%",
                    improvement_percent(first.aggregate.ndcg_fused, r.aggregate.ndcg_fused));
                out << std::setw(12) << buf;
            }
        }
        out << std::defaultfloat << "\n";
    }
    return out.str();
}

inline std::string comparison_csv(const std::vector<RunSummary>& runs) {
    if (runs.empty()) throw std::invalid_argument("comparison over no runs");
    std::size_t k = runs.front().top_k;
    std::ostringstream out;
    out << "label,hr" << k << ",ndcg" << k;
    if (runs.size() > 1) out << ",hr_gain_pct,ndcg_gain_pct";
    out << "\n";
    const RunSummary& first = runs.front();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const RunSummary& r = runs[i];
        out << r.label << ',' << r.aggregate.hr_fused << ',' << r.aggregate.ndcg_fused;
        if (runs.size() > 1) {
            if (i == 0) {
                out << ",,";
            } else {
                out << ',' << improvement_percent(first.aggregate.hr_fused, r.aggregate.hr_fused)
                    << ','
                    << improvement_percent(first.aggregate.ndcg_fused, r.aggregate.ndcg_fused);
            }
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace streamrec
