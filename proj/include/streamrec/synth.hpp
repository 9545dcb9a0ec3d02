#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "streamrec/ingest.hpp"
#include "streamrec/rng.hpp"

namespace streamrec {

/*!
 * Synthetic implicit-feedback stream with the structure streaming
 * recommenders contend with: clustered user tastes, a stable personal
 * component (long-term preferences), per-user taste migration between
 * clusters spread across the stream (concept drift), and popularity skew.
 */
struct SynthConfig {
    std::size_t num_users = 950;
    std::size_t num_items = 1200;
    std::size_t num_interactions = 100000;
    std::size_t latent_dim = 8;
    std::size_t num_clusters = 8;
    double drift = 1.0;             // 0 = static tastes, 1 = full cluster migration
    double drift_start_lo = 0.5;    // earliest migration onset (stream fraction)
    double drift_start_hi = 0.95;   // latest onset; > train fraction keeps drift live in test
    double drift_duration_lo = 0.05;
    double drift_duration_hi = 0.15;
    double noise_temperature = 0.35;
    double personal_weight = 0.5;   // stable per-user taste component
    double popularity_skew = 0.6;   // Zipf exponent for item popularity
    double activity_sigma = 0.7;    // lognormal spread of per-user activity
    std::size_t candidates_per_event = 64;
    std::uint64_t seed = 1;
};

namespace detail {

inline double smoothstep(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

}  // namespace detail

inline std::vector<RawRecord> generate_synthetic_ratings(const SynthConfig& cfg) {
    if (cfg.num_users == 0 || cfg.num_items == 0 || cfg.num_interactions == 0)
        throw std::invalid_argument("synthetic stream needs positive sizes");
    Rng rng(derive_seed(cfg.seed, kTagSynthesis));
    std::size_t dim = cfg.latent_dim;
    double inv_sqrt_dim = 1.0 / std::sqrt(static_cast<double>(dim));

    // cluster centroids
    std::vector<std::vector<double>> centroid(cfg.num_clusters, std::vector<double>(dim));
    for (auto& c : centroid)
        for (double& x : c) x = rng.normal(0.0, 1.0) * inv_sqrt_dim * 2.0;

    // items: cluster taste plus idiosyncrasy plus Zipf popularity
    std::vector<std::vector<double>> item_vec(cfg.num_items, std::vector<double>(dim));
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
        const auto& c = centroid[i % cfg.num_clusters];
        for (std::size_t j = 0; j < dim; ++j)
            item_vec[i][j] = c[j] + rng.normal(0.0, 0.6) * inv_sqrt_dim;
    }
    std::vector<double> pop_cdf(cfg.num_items);
    {
        std::vector<double> w(cfg.num_items);
        double sum = 0.0;
        for (std::size_t i = 0; i < cfg.num_items; ++i) {
            w[i] = 1.0 / std::pow(static_cast<double>(i + 1), cfg.popularity_skew);
            sum += w[i];
        }
        // shuffle so popularity is independent of the cluster assignment
        for (std::size_t i = cfg.num_items; i-- > 1;) {
            std::size_t j = static_cast<std::size_t>(rng.uniform_int(i + 1));
            std::swap(w[i], w[j]);
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < cfg.num_items; ++i) {
            acc += w[i] / sum;
            pop_cdf[i] = acc;
        }
        pop_cdf.back() = 1.0;
    }

    // users: base cluster, migration target, onset, duration, stable taste
    struct UserProfile {
        std::size_t from_cluster, to_cluster;
        double onset, duration;
        std::vector<double> personal;
    };
    std::vector<UserProfile> user(cfg.num_users);
    std::vector<double> activity_cdf(cfg.num_users);
    {
        double sum = 0.0;
        std::vector<double> w(cfg.num_users);
        for (std::size_t u = 0; u < cfg.num_users; ++u) {
            UserProfile& p = user[u];
            p.from_cluster = static_cast<std::size_t>(rng.uniform_int(cfg.num_clusters));
            p.to_cluster = static_cast<std::size_t>(rng.uniform_int(cfg.num_clusters));
            if (cfg.num_clusters > 1)  // migrate to a genuinely different taste
                while (p.to_cluster == p.from_cluster)
                    p.to_cluster = static_cast<std::size_t>(rng.uniform_int(cfg.num_clusters));
            p.onset = rng.uniform_range(cfg.drift_start_lo, cfg.drift_start_hi);
            p.duration = rng.uniform_range(cfg.drift_duration_lo, cfg.drift_duration_hi);
            p.personal.resize(dim);
            for (double& x : p.personal)
                x = rng.normal(0.0, cfg.personal_weight) * inv_sqrt_dim * 2.0;
            w[u] = std::exp(rng.normal(0.0, cfg.activity_sigma));
            sum += w[u];
        }
        double acc = 0.0;
        for (std::size_t u = 0; u < cfg.num_users; ++u) {
            acc += w[u] / sum;
            activity_cdf[u] = acc;
        }
        activity_cdf.back() = 1.0;
    }

    auto draw_cdf = [&](const std::vector<double>& cdf) {
        double x = rng.uniform();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), x);
        if (it == cdf.end()) --it;
        return static_cast<std::size_t>(it - cdf.begin());
    };

    std::vector<std::unordered_set<ItemId>> chosen(cfg.num_users);
    std::vector<RawRecord> records;
    records.reserve(cfg.num_interactions);
    std::vector<double> taste(dim);

    std::size_t emitted = 0;
    std::size_t stalls = 0;
    const std::size_t stall_budget = 20 * cfg.num_interactions + 1000;
    while (emitted < cfg.num_interactions) {
        double tau = static_cast<double>(emitted) / static_cast<double>(cfg.num_interactions);
        std::size_t u = draw_cdf(activity_cdf);
        if (chosen[u].size() >= cfg.num_items) {  // saturated user, pick another
            if (++stalls > stall_budget)
                throw std::runtime_error("synthetic generator stalled: item universe exhausted");
            continue;
        }
        const UserProfile& prof = user[u];
        double m = cfg.drift * detail::smoothstep((tau - prof.onset) / prof.duration);
        const auto& ca = centroid[prof.from_cluster];
        const auto& cb = centroid[prof.to_cluster];
        for (std::size_t j = 0; j < dim; ++j)
            taste[j] = (1.0 - m) * ca[j] + m * cb[j] + prof.personal[j];

        // Gumbel-max over a popularity-proposed candidate set = softmax pick
        double best = -1e300;
        std::size_t best_item = cfg.num_items;
        for (std::size_t c = 0; c < cfg.candidates_per_event; ++c) {
            std::size_t i = draw_cdf(pop_cdf);
            if (chosen[u].count(static_cast<ItemId>(i))) continue;
            double s = 0.0;
            for (std::size_t j = 0; j < dim; ++j) s += taste[j] * item_vec[i][j];
            s /= cfg.noise_temperature;
            s += -std::log(-std::log(1.0 - rng.uniform()));
            if (s > best) {
                best = s;
                best_item = i;
            }
        }
        if (best_item == cfg.num_items) {
            // every proposal was already chosen; fall back to a uniform unseen item
            for (int attempt = 0; attempt < 64 && best_item == cfg.num_items; ++attempt) {
                std::size_t i = static_cast<std::size_t>(rng.uniform_int(cfg.num_items));
                if (!chosen[u].count(static_cast<ItemId>(i))) best_item = i;
            }
            if (best_item == cfg.num_items) {
                if (++stalls > stall_budget)
                    throw std::runtime_error("synthetic generator stalled: item universe exhausted");
                continue;
            }
        }
        chosen[u].insert(static_cast<ItemId>(best_item));
        records.push_back({u + 1, static_cast<std::uint64_t>(best_item) + 1,
                           static_cast<std::int64_t>(emitted)});
        ++emitted;
    }
    return records;
}

//! Convenience: generate and preprocess in one step.
inline Dataset generate_synthetic_dataset(const SynthConfig& cfg) {
    return preprocess(generate_synthetic_ratings(cfg));
}

}  // namespace streamrec
