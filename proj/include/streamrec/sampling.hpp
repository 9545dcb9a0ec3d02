#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "streamrec/config.hpp"
#include "streamrec/decay.hpp"
#include "streamrec/rng.hpp"
#include "streamrec/types.hpp"

namespace streamrec {

enum class SampleSource : std::uint8_t { NewData, Reservoir };

struct SampledInteraction {
    Interaction interaction;
    SampleSource source;
};

/*!
 * One training batch of positives. Multiset semantics: draws are with
 * replacement, duplicates allowed. Provenance is tracked per element so
 * the stratification contract can be checked.
 */
struct SampleBatch {
    std::vector<SampledInteraction> positives;
    bool degenerate_new = false;  // new-data stratum fell back to the reservoir

    std::size_t from_new() const {
        std::size_t n = 0;
        for (const auto& s : positives) n += (s.source == SampleSource::NewData) ? 1 : 0;
        return n;
    }
    std::size_t from_reservoir() const { return positives.size() - from_new(); }
};

//! Stratum size for the new data: round(bs * alpha), half up.
inline std::size_t new_data_share(std::size_t batch_size, double alpha) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(batch_size) * alpha + 0.5));
}

/*!
 * Keeps the two most recent decay tables alive. Within a run (lambda, n)
 * changes only when the reservoir is still filling or at the final partial
 * batch, so this hits nearly always. Entries are immutable once built.
 */
class DecayCache {
  public:
    const DecayDistribution& get(double lambda, std::size_t n) {
        for (auto& e : entries_)
            if (e && e->lambda() == lambda && e->size() == n) return *e;
        slot_ = 1 - slot_;
        entries_[slot_] = std::make_unique<DecayDistribution>(lambda, n);
        return *entries_[slot_];
    }

  private:
    std::unique_ptr<DecayDistribution> entries_[2];
    int slot_ = 0;
};

namespace detail {

template <typename AtFn>
void draw_decayed(std::size_t size, AtFn&& at, SampleSource tag, double lambda, std::size_t count,
                  Rng& rng, DecayCache* cache, std::vector<SampledInteraction>& out) {
    if (count == 0) return;
    DecayCache local;
    const DecayDistribution& dist = (cache ? *cache : local).get(lambda, size);
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t k = dist.sample(rng);  // 1 = oldest, size = newest
        out.push_back({at(k - 1), tag});
    }
}

}  // namespace detail

/*!
 * Stratified time-aware sampling: round(bs*alpha) draws from the new data
 * under geometric decay lambda_new (newest most likely), the remainder from
 * the reservoir under lambda_res, merged into one batch. All draws are with
 * replacement. An empty new-data stratum at alpha > 0 degrades to
 * reservoir-only draws and flags the batch.
 */
inline SampleBatch sts_sample(std::span<const Interaction> new_data, const Reservoir& reservoir,
                              const ExperimentConfig& cfg, Rng& rng,
                              DecayCache* new_cache = nullptr, DecayCache* res_cache = nullptr) {
    if (new_data.empty() && reservoir.empty())
        throw std::invalid_argument("sts_sample: both new data and reservoir are empty");

    std::size_t bs = cfg.batch_size;
    std::size_t want_new = new_data_share(bs, cfg.alpha);
    std::size_t want_res = bs - want_new;

    SampleBatch batch;
    batch.positives.reserve(bs);

    if (new_data.empty() && want_new > 0) {
        // degenerate stream start: nothing new yet, keep the batch size
        batch.degenerate_new = true;
        want_res += want_new;
        want_new = 0;
    }
    if (reservoir.empty() && want_res > 0) {
        want_new += want_res;
        want_res = 0;
    }

    detail::draw_decayed(
        new_data.size(), [&](std::size_t i) -> const Interaction& { return new_data[i]; },
        SampleSource::NewData, cfg.lambda_new, want_new, rng, new_cache, batch.positives);
    detail::draw_decayed(
        reservoir.size(), [&](std::size_t i) -> const Interaction& { return reservoir.at(i); },
        SampleSource::Reservoir, cfg.lambda_res, want_res, rng, res_cache, batch.positives);
    return batch;
}

//! New Data Only: bs uniform with-replacement draws from the new data.
inline SampleBatch ndo_sample(std::span<const Interaction> new_data, const ExperimentConfig& cfg,
                              Rng& rng) {
    if (new_data.empty()) throw std::invalid_argument("ndo_sample: new data is empty");
    SampleBatch batch;
    batch.positives.reserve(cfg.batch_size);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        std::size_t j = rng.uniform_int(new_data.size());
        batch.positives.push_back({new_data[j], SampleSource::NewData});
    }
    return batch;
}

//! Reservoir-enhanced random sampling: uniform over new data and reservoir pooled.
inline SampleBatch rr_sample(std::span<const Interaction> new_data, const Reservoir& reservoir,
                             const ExperimentConfig& cfg, Rng& rng) {
    std::size_t total = new_data.size() + reservoir.size();
    if (total == 0) throw std::invalid_argument("rr_sample: both new data and reservoir are empty");
    SampleBatch batch;
    batch.positives.reserve(cfg.batch_size);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        std::size_t j = rng.uniform_int(total);
        if (j < new_data.size())
            batch.positives.push_back({new_data[j], SampleSource::NewData});
        else
            batch.positives.push_back({reservoir.at(j - new_data.size()), SampleSource::Reservoir});
    }
    return batch;
}

//! Sliding window: bs uniform with-replacement draws over the last w interactions.
inline SampleBatch sw_sample(std::span<const Interaction> window, const ExperimentConfig& cfg,
                             Rng& rng) {
    if (window.empty()) throw std::invalid_argument("sw_sample: window is empty");
    SampleBatch batch;
    batch.positives.reserve(cfg.batch_size);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        std::size_t j = rng.uniform_int(window.size());
        batch.positives.push_back({window[j], SampleSource::NewData});
    }
    return batch;
}

struct LabeledExample {
    UserId user = 0;
    ItemId item = 0;
    double label = 0.0;
};

struct LabeledBatch {
    std::vector<LabeledExample> examples;
    std::size_t negative_shortfall = 0;  // negatives dropped for near-saturated users
};

/*!
 * Implicit-feedback labeling: each positive is emitted with label 1 followed
 * by `ratio` uniform rejection-sampled items the user has never interacted
 * with, label 0. A positive whose user has nearly exhausted the item space
 * gets fewer negatives after 100*ratio failed attempts.
 */
inline LabeledBatch negative_sample(const SampleBatch& positives, const SeenIndex& seen,
                                    std::size_t num_items, std::size_t ratio, Rng& rng) {
    if (num_items == 0) throw std::invalid_argument("negative_sample: empty item universe");
    LabeledBatch out;
    out.examples.reserve(positives.positives.size() * (1 + ratio));
    for (const auto& s : positives.positives) {
        const Interaction& x = s.interaction;
        out.examples.push_back({x.user, x.item, 1.0});
        if (ratio == 0) continue;
        std::size_t emitted = 0;
        std::size_t attempts = 0;
        const std::size_t max_attempts = 100 * ratio;
        while (emitted < ratio && attempts < max_attempts) {
            ++attempts;
            ItemId candidate = static_cast<ItemId>(rng.uniform_int(num_items));
            if (seen.contains(x.user, candidate)) continue;
            out.examples.push_back({x.user, candidate, 0.0});
            ++emitted;
        }
        out.negative_shortfall += ratio - emitted;
    }
    return out;
}

}  // namespace streamrec
