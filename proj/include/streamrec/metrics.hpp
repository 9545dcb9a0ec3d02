#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "streamrec/rng.hpp"
#include "streamrec/types.hpp"

namespace streamrec {

//! 1 iff the target ranked within the top k.
inline int hr_at_k(std::size_t rank, std::size_t k) { return rank <= k ? 1 : 0; }

//! Position-discounted hit credit: 1/log2(rank+1) within the top k, else 0.
inline double ndcg_at_k(std::size_t rank, std::size_t k) {
    if (rank > k) return 0.0;
    return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

/*!
 * 1-based rank of the target among the candidates. Ties count against the
 * target, so a candidate scoring exactly the target's score pushes it down.
 */
inline std::size_t rank_of_target(double target_score, std::span<const double> candidate_scores) {
    std::size_t rank = 1;
    for (double s : candidate_scores) rank += (s >= target_score) ? 1 : 0;
    return rank;
}

/*!
 * One ranking evaluation: the target interaction plus eval_negatives items
 * the user has never interacted with. Candidates are distinct and exclude
 * the target item.
 */
struct RankingTask {
    Interaction target;
    std::vector<ItemId> negatives;

    std::size_t num_candidates() const { return negatives.size() + 1; }
};

inline RankingTask make_ranking_task(const Interaction& target, const SeenIndex& seen,
                                     std::size_t num_items, std::size_t eval_negatives, Rng& rng) {
    if (eval_negatives + 1 > num_items)
        throw std::invalid_argument("item universe too small for requested candidate set");
    RankingTask task;
    task.target = target;
    task.negatives.reserve(eval_negatives);
    std::unordered_set<ItemId> picked;
    picked.reserve(eval_negatives * 2);
    std::size_t attempts = 0;
    const std::size_t max_attempts = 1000 * (eval_negatives + 1);
    while (task.negatives.size() < eval_negatives) {
        if (++attempts > max_attempts)
            throw std::runtime_error("could not sample unseen evaluation negatives for user " +
                                     std::to_string(target.user));
        ItemId candidate = static_cast<ItemId>(rng.uniform_int(num_items));
        if (candidate == target.item) continue;
        if (picked.count(candidate)) continue;
        if (seen.contains(target.user, candidate)) continue;
        picked.insert(candidate);
        task.negatives.push_back(candidate);
    }
    return task;
}

//! Per-iteration evaluation record for one prequential iteration.
struct IterationMetrics {
    std::size_t iteration = 0;
    std::size_t n_evaluated = 0;   // test interactions in this iteration
    std::size_t n_seen_total = 0;  // interactions fed to the system so far
    double hr_fused = 0.0;
    double ndcg_fused = 0.0;
    std::vector<double> hr_model;
    std::vector<double> ndcg_model;
    double wall_ms_test = 0.0;
    double wall_ms_train = 0.0;
};

//! Whole-run aggregate: per-interaction means over every test interaction.
struct RunAggregate {
    std::size_t n_test = 0;
    std::size_t iterations = 0;
    double hr_fused = 0.0;
    double ndcg_fused = 0.0;
    std::vector<double> hr_model;
    std::vector<double> ndcg_model;
};

inline RunAggregate aggregate(std::span<const IterationMetrics> records) {
    if (records.empty()) throw std::invalid_argument("aggregate: no iteration records");
    RunAggregate out;
    out.iterations = records.size();
    std::size_t num_models = records.front().hr_model.size();
    out.hr_model.assign(num_models, 0.0);
    out.ndcg_model.assign(num_models, 0.0);
    for (const auto& r : records) {
        double w = static_cast<double>(r.n_evaluated);
        out.n_test += r.n_evaluated;
        out.hr_fused += w * r.hr_fused;
        out.ndcg_fused += w * r.ndcg_fused;
        for (std::size_t k = 0; k < num_models; ++k) {
            out.hr_model[k] += w * r.hr_model[k];
            out.ndcg_model[k] += w * r.ndcg_model[k];
        }
    }
    double denom = static_cast<double>(out.n_test);
    out.hr_fused /= denom;
    out.ndcg_fused /= denom;
    for (std::size_t k = 0; k < num_models; ++k) {
        out.hr_model[k] /= denom;
        out.ndcg_model[k] /= denom;
    }
    return out;
}

}  // namespace streamrec
