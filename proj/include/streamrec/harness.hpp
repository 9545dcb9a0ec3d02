#pragma once

#include <chrono>
#include <cstddef>
#include <deque>
#include <ostream>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "streamrec/config.hpp"
#include "streamrec/ensemble.hpp"
#include "streamrec/metrics.hpp"
#include "streamrec/models.hpp"
#include "streamrec/sampling.hpp"
#include "streamrec/types.hpp"

namespace streamrec {

struct Warnings {
    std::size_t degenerate_new_batches = 0;
    std::size_t negative_shortfall = 0;
};

/*!
 * Full streaming-recommender state: the reservoir and seen index owned by
 * the coordinator, o individual models with their optimizer state, and the
 * per-model accuracy memories driving adaptive fusion.
 */
struct SystemState {
    ExperimentConfig cfg;
    std::size_t num_users = 0;
    std::size_t num_items = 0;

    Reservoir reservoir;
    SeenIndex seen;
    std::deque<Interaction> window;  // most recent interactions for the SW sampler

    std::vector<IndividualModel> models;
    std::vector<AdamState> adam;
    std::vector<AccuracyMemory> memories;
    std::vector<double> global_accuracy;  // per-model mean acc of last test batch
    std::vector<DecayCache> new_caches, res_caches;

    std::size_t iteration = 0;        // global training-iteration counter
    std::size_t n_consumed = 0;       // interactions fed to the system so far
    std::uint64_t last_evaluated_seq = 0;
    bool any_evaluated = false;
    Warnings warnings;

    StreamSchedule schedule() const { return {cfg.batch_size, cfg.n_receive}; }

    explicit SystemState(const ExperimentConfig& config, std::size_t users, std::size_t items)
        : cfg(config), num_users(users), num_items(items), reservoir(config.reservoir_capacity) {
        cfg.validate();
        if (users == 0 || items == 0)
            throw std::invalid_argument("system needs a non-empty user/item universe");
        ModelDims dims = model_dims(cfg, users, items);
        models.reserve(cfg.num_models);
        for (std::size_t k = 0; k < cfg.num_models; ++k) {
            Rng rng(derive_seed(cfg.rng_seed, kTagModelInit, k));
            models.push_back(IndividualModel::initialized(cfg.model_kind, dims, rng));
            adam.emplace_back(models.back().num_parameters());
        }
        memories.resize(cfg.num_models);
        new_caches.resize(cfg.num_models);
        res_caches.resize(cfg.num_models);
    }
};

namespace detail {

//! Fork-join over the o models; workers == 1 is a plain loop.
template <typename Fn>
void for_each_model(std::size_t num_models, std::size_t workers, Fn&& fn) {
    if (workers <= 1 || num_models <= 1) {
        for (std::size_t k = 0; k < num_models; ++k) fn(k);
        return;
    }
    std::size_t n_threads = std::min(workers, num_models);
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t k = t; k < num_models; k += n_threads) fn(k);
        });
    }
    for (auto& th : pool) th.join();
}

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
        .count();
}

}  // namespace detail

//! Ingests a chunk into the bookkeeping structures (seen index, reservoir,
//! sliding window) in arrival order.
inline void absorb_chunk(SystemState& state, std::span<const Interaction> chunk) {
    for (const auto& x : chunk) {
        state.seen.record(x.user, x.item);
        state.reservoir.insert(x);
        state.window.push_back(x);
        while (state.window.size() > state.cfg.window_size()) state.window.pop_front();
        ++state.n_consumed;
    }
}

/*!
 * One concurrent-training round: each model draws its own batch (own rng
 * sub-stream keyed by iteration and model index), labels it with sampled
 * negatives, and takes one optimizer step. The chunk must already be
 * absorbed; in the prequential phase it must also have been evaluated.
 */
inline void train_models(SystemState& state, std::span<const Interaction> new_data,
                         std::size_t workers) {
    const ExperimentConfig& cfg = state.cfg;

    // prequential guard: never train on data that has not been evaluated
    if (state.any_evaluated)
        for (const auto& x : new_data)
            if (x.seq > state.last_evaluated_seq)
                throw std::logic_error("train-before-test violation at seq " +
                                       std::to_string(x.seq));

    std::vector<Interaction> window_copy(state.window.begin(), state.window.end());
    std::vector<Warnings> local(cfg.num_models);

    detail::for_each_model(cfg.num_models, workers, [&](std::size_t k) {
        Rng rng(derive_seed(cfg.rng_seed, kTagSampling, state.iteration, k));
        SampleBatch batch;
        switch (cfg.sampler_kind) {
            case SamplerKind::Sts:
                batch = sts_sample(new_data, state.reservoir, cfg, rng, &state.new_caches[k],
                                   &state.res_caches[k]);
                break;
            case SamplerKind::Ndo:
                batch = ndo_sample(new_data, cfg, rng);
                break;
            case SamplerKind::Rr:
                batch = rr_sample(new_data, state.reservoir, cfg, rng);
                break;
            case SamplerKind::Sw:
                batch = sw_sample(window_copy, cfg, rng);
                break;
        }
        if (batch.degenerate_new) ++local[k].degenerate_new_batches;
        LabeledBatch labeled =
            negative_sample(batch, state.seen, state.num_items, cfg.negative_ratio, rng);
        local[k].negative_shortfall += labeled.negative_shortfall;
        state.models[k].train_step(labeled.examples, state.adam[k], cfg.learning_rate,
                                   cfg.l2_weight);
    });

    for (const auto& w : local) {
        state.warnings.degenerate_new_batches += w.degenerate_new_batches;
        state.warnings.negative_shortfall += w.negative_shortfall;
    }
    ++state.iteration;
}

/*!
 * Consumes the training split through the training branch only: per chunk
 * of n_r, absorb then train. No evaluation happens here.
 */
inline void run_training_phase(SystemState& state, std::span<const Interaction> training,
                               std::size_t workers = 1) {
    const StreamSchedule schedule = state.schedule();
    std::size_t pos = 0;
    while (pos < training.size()) {
        std::size_t len = std::min(schedule.n_received, training.size() - pos);
        std::span<const Interaction> chunk = training.subspan(pos, len);
        absorb_chunk(state, chunk);
        train_models(state, chunk, workers);
        pos += len;
    }
}

namespace detail {

struct TaskScores {
    std::vector<double> per_model;  // score of the target per model (index 0 of candidates)
    std::vector<std::size_t> rank_per_model;
};

}  // namespace detail

//! CSV schema for the per-iteration metrics stream.
inline void write_metrics_csv_header(std::ostream& out, std::size_t num_models, std::size_t k) {
    out << "iteration,n_seen,hr" << k << "_fused,ndcg" << k << "_fused";
    for (std::size_t m = 0; m < num_models; ++m) out << ",hr" << k << "_model_" << m;
    out << ",wall_ms_test,wall_ms_train\n";
}

inline void write_metrics_csv_row(std::ostream& out, const IterationMetrics& r) {
    out << r.iteration << ',' << r.n_seen_total << ',' << r.hr_fused << ',' << r.ndcg_fused;
    for (double hr : r.hr_model) out << ',' << hr;
    out << ',' << r.wall_ms_test << ',' << r.wall_ms_train << '\n';
}

/*!
 * Prequential loop over the test stream: per iteration, receive the next
 * n_r interactions, evaluate them (per-model and fused rankings over a
 * shared 100-item candidate draw), refresh the accuracy memories, absorb
 * the chunk, then run one concurrent-training round. The final partial
 * chunk is processed as-is.
 */
inline std::vector<IterationMetrics> run_prequential_phase(SystemState& state,
                                                           std::span<const Interaction> test,
                                                           std::size_t workers = 1,
                                                           std::ostream* csv = nullptr) {
    const ExperimentConfig& cfg = state.cfg;
    const StreamSchedule schedule = state.schedule();
    std::size_t o = cfg.num_models;
    std::vector<IterationMetrics> records;
    if (csv) write_metrics_csv_header(*csv, o, cfg.top_k);

    std::size_t pos = 0;
    std::size_t iter_index = 0;
    while (pos < test.size()) {
        std::size_t len = std::min(schedule.n_received, test.size() - pos);
        std::span<const Interaction> chunk = test.subspan(pos, len);

        IterationMetrics rec;
        rec.iteration = iter_index;
        rec.n_evaluated = len;
        rec.hr_model.assign(o, 0.0);
        rec.ndcg_model.assign(o, 0.0);

        auto t0 = std::chrono::steady_clock::now();

        // ---- TEST ----
        std::vector<std::vector<MemoryEntry>> pending(o);
        for (auto& p : pending) p.reserve(len);
        std::vector<double> acc_sum(o, 0.0);

        std::size_t d2 = 2 * cfg.embedding_dim;
        std::size_t n_cand = cfg.eval_negatives + 1;
        std::vector<std::vector<double>> scores(o, std::vector<double>(n_cand));
        std::vector<ItemId> candidates(n_cand);

        for (const auto& target : chunk) {
            Rng task_rng(derive_seed(cfg.rng_seed, kTagEvalNegatives, target.seq));
            RankingTask task =
                make_ranking_task(target, state.seen, state.num_items, cfg.eval_negatives, task_rng);
            candidates[0] = target.item;
            std::copy(task.negatives.begin(), task.negatives.end(), candidates.begin() + 1);

            detail::for_each_model(o, workers, [&](std::size_t k) {
                state.models[k].score_candidates(target.user, candidates, scores[k]);
            });

            // per-model ranking and NDCG-contribution accuracy
            for (std::size_t k = 0; k < o; ++k) {
                std::span<const double> cand(scores[k].data() + 1, n_cand - 1);
                std::size_t rank = rank_of_target(scores[k][0], cand);
                rec.hr_model[k] += hr_at_k(rank, cfg.top_k);
                rec.ndcg_model[k] += ndcg_at_k(rank, cfg.top_k);
                double acc = ndcg_at_k(rank, cfg.top_k);
                acc_sum[k] += acc;
                MemoryEntry entry;
                entry.accuracy = acc;
                entry.user = target.user;
                entry.item = target.item;
                entry.embedding.resize(d2);
                state.models[k].pair_embedding(target.user, target.item, entry.embedding);
                pending[k].push_back(std::move(entry));
            }

            // fused ranking over the same candidate set
            std::vector<double> fused(n_cand);
            switch (cfg.fuser_kind) {
                case FuserKind::Avg: {
                    for (std::size_t j = 0; j < n_cand; ++j) {
                        double s = 0.0;
                        for (std::size_t k = 0; k < o; ++k) s += scores[k][j];
                        fused[j] = s / static_cast<double>(o);
                    }
                    break;
                }
                case FuserKind::AdaW: {
                    std::vector<double> preds(o);
                    for (std::size_t j = 0; j < n_cand; ++j) {
                        for (std::size_t k = 0; k < o; ++k) preds[k] = scores[k][j];
                        fused[j] = adaw_fuse(preds, state.global_accuracy);
                    }
                    break;
                }
                case FuserKind::Ael: {
                    // memories are replaced together, so cold start is all-or-none
                    bool cold = state.memories[0].empty();
                    if (cold) {
                        for (std::size_t j = 0; j < n_cand; ++j) {
                            double s = 0.0;
                            for (std::size_t k = 0; k < o; ++k) s += scores[k][j];
                            fused[j] = s / static_cast<double>(o);
                        }
                        break;
                    }
                    // one weight vector per task, from the target pair; the
                    // same weights fuse every candidate so scores stay
                    // comparable within the ranking
                    std::vector<double> conf(o);
                    detail::for_each_model(o, workers, [&](std::size_t k) {
                        std::vector<double> emb(d2);
                        state.models[k].pair_embedding(target.user, target.item, emb);
                        conf[k] = *confidence(state.memories[k], emb, cfg.memory_top_e);
                    });
                    std::vector<double> fw = fusion_weights(conf);
                    std::vector<double> preds(o);
                    for (std::size_t j = 0; j < n_cand; ++j) {
                        for (std::size_t k = 0; k < o; ++k) preds[k] = scores[k][j];
                        fused[j] = fuse(preds, fw);
                    }
                    break;
                }
            }
            std::span<const double> cand(fused.data() + 1, n_cand - 1);
            std::size_t rank = rank_of_target(fused[0], cand);
            rec.hr_fused += hr_at_k(rank, cfg.top_k);
            rec.ndcg_fused += ndcg_at_k(rank, cfg.top_k);

            state.last_evaluated_seq = target.seq;
            state.any_evaluated = true;
        }

        double denom = static_cast<double>(len);
        rec.hr_fused /= denom;
        rec.ndcg_fused /= denom;
        for (std::size_t k = 0; k < o; ++k) {
            rec.hr_model[k] /= denom;
            rec.ndcg_model[k] /= denom;
        }

        // refresh the accuracy memories wholesale with this batch
        state.global_accuracy.assign(o, 0.0);
        for (std::size_t k = 0; k < o; ++k) {
            state.global_accuracy[k] = acc_sum[k] / denom;
            state.memories[k].replace(std::move(pending[k]));
        }
        rec.wall_ms_test = detail::elapsed_ms(t0);

        // ---- TRAIN ----
        auto t1 = std::chrono::steady_clock::now();
        absorb_chunk(state, chunk);
        train_models(state, chunk, workers);
        rec.wall_ms_train = detail::elapsed_ms(t1);

        rec.n_seen_total = state.n_consumed;
        if (csv) write_metrics_csv_row(*csv, rec);
        records.push_back(std::move(rec));
        pos += len;
        ++iter_index;
    }
    return records;
}

}  // namespace streamrec
