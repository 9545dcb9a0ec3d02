#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "streamrec/types.hpp"

namespace streamrec {

//! Cosine similarity; a zero operand yields 0 by convention.
inline double cosine_similarity(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw std::invalid_argument("cosine_similarity: length mismatch");
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dot += x[i] * y[i];
        nx += x[i] * x[i];
        ny += y[i] * y[i];
    }
    if (nx == 0.0 || ny == 0.0) return 0.0;
    return dot / (std::sqrt(nx) * std::sqrt(ny));
}

/*!
 * One remembered test outcome: the accuracy a model earned on a user-item
 * pair, with the pair embedding snapshotted as it was when the accuracy was
 * earned (not a live view).
 */
struct MemoryEntry {
    double accuracy = 0.0;
    UserId user = 0;
    ItemId item = 0;
    std::vector<double> embedding;  // [p_u; q_v] at evaluation time
    double embedding_norm = 0.0;    // cached L2 norm
};

/*!
 * Per-model accuracy memory over the last test batch. Replaced wholesale
 * after every test iteration; its size is that batch's size.
 */
class AccuracyMemory {
  public:
    void replace(std::vector<MemoryEntry> batch) {
        for (auto& e : batch) {
            double sq = 0.0;
            for (double x : e.embedding) sq += x * x;
            e.embedding_norm = std::sqrt(sq);
        }
        entries_ = std::move(batch);
    }

    const std::vector<MemoryEntry>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

  private:
    std::vector<MemoryEntry> entries_;
};

/*!
 * Confidence of one model for a target pair: the mean accuracy over the
 * top-e stored tuples most cosine-similar to the target embedding, ties
 * broken toward the lower stored index. Empty memory signals cold start.
 */
inline std::optional<double> confidence(const AccuracyMemory& memory,
                                        std::span<const double> target_embedding, std::size_t e) {
    if (e == 0) throw std::invalid_argument("confidence: neighbor count must be positive");
    if (memory.empty()) return std::nullopt;

    double tsq = 0.0;
    for (double x : target_embedding) tsq += x * x;
    double tnorm = std::sqrt(tsq);

    const auto& entries = memory.entries();
    std::vector<std::pair<double, std::size_t>> sims;  // (similarity, index)
    sims.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const MemoryEntry& m = entries[i];
        if (m.embedding.size() != target_embedding.size())
            throw std::invalid_argument("confidence: embedding length mismatch");
        double sim = 0.0;
        if (tnorm != 0.0 && m.embedding_norm != 0.0) {
            double dot = 0.0;
            const double* a = target_embedding.data();
            const double* b = m.embedding.data();
            for (std::size_t j = 0; j < target_embedding.size(); ++j) dot += a[j] * b[j];
            sim = dot / (tnorm * m.embedding_norm);
        }
        sims.emplace_back(sim, i);
    }
    std::size_t take = std::min(e, sims.size());
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(take), sims.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    double acc = 0.0;
    for (std::size_t i = 0; i < take; ++i) acc += entries[sims[i].second].accuracy;
    return acc / static_cast<double>(take);
}

//! Confidences are clamped into [kConfidenceClamp, 1-kConfidenceClamp]
//! before the odds transform so fw' = c/(1-c) stays finite.
constexpr double kConfidenceClamp = 0.01;

/*!
 * AdaBoost-like weights: fw' = c/(1-c) elementwise, then L1-normalized.
 * Nonnegative, sums to 1, strictly increasing in each model's confidence.
 */
inline std::vector<double> fusion_weights(std::span<const double> confidences) {
    if (confidences.empty()) throw std::invalid_argument("fusion_weights: no confidences");
    std::vector<double> fw(confidences.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        double c = std::clamp(confidences[i], kConfidenceClamp, 1.0 - kConfidenceClamp);
        fw[i] = c / (1.0 - c);
        sum += fw[i];
    }
    for (double& w : fw) w /= sum;
    return fw;
}

//! Weighted fusion: fw^T yhat. Lies in [min yhat, max yhat].
inline double fuse(std::span<const double> predictions, std::span<const double> weights) {
    if (predictions.size() != weights.size())
        throw std::invalid_argument("fuse: length mismatch");
    double out = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) out += weights[i] * predictions[i];
    return out;
}

//! Plain averaging baseline.
inline double avg_fuse(std::span<const double> predictions) {
    if (predictions.empty()) throw std::invalid_argument("avg_fuse: no predictions");
    double s = std::accumulate(predictions.begin(), predictions.end(), 0.0);
    return s / static_cast<double>(predictions.size());
}

/*!
 * AdaBoost-like weighting baseline: the odds transform applied to each
 * model's global mean accuracy over the last test batch, with no per-target
 * neighborhood. Cold start (no accuracies yet) falls back to averaging.
 */
inline double adaw_fuse(std::span<const double> predictions,
                        std::span<const double> global_accuracies) {
    if (global_accuracies.empty()) return avg_fuse(predictions);
    if (predictions.size() != global_accuracies.size())
        throw std::invalid_argument("adaw_fuse: length mismatch");
    std::vector<double> fw = fusion_weights(global_accuracies);
    return fuse(predictions, fw);
}

}  // namespace streamrec
