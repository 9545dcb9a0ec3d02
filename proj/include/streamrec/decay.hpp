#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "streamrec/rng.hpp"

namespace streamrec {

/*!
 * Normalized sampling probability of position k (1-based, k=1 oldest,
 * k=n newest) under geometric recency decay with ratio lambda:
 *
 *   P(k) = lambda^(k-1) * (lambda - 1) / (lambda^n - 1)   for lambda > 1
 *   P(k) = 1 / n                                          for lambda = 1
 *
 * Evaluated in log space so large n does not overflow.
 */
inline double decay_probability(double lambda, std::size_t n, std::size_t k) {
    if (lambda < 1.0) throw std::invalid_argument("decay ratio must be >= 1");
    if (n == 0 || k < 1 || k > n) throw std::invalid_argument("decay index out of range");
    if (lambda == 1.0) return 1.0 / static_cast<double>(n);
    double log_lambda = std::log(lambda);
    // log(lambda^n - 1) = n*log(lambda) + log1p(-lambda^-n)
    double log_denom = static_cast<double>(n) * log_lambda +
                       std::log1p(-std::exp(-static_cast<double>(n) * log_lambda));
    return std::exp(static_cast<double>(k - 1) * log_lambda + std::log(lambda - 1.0) - log_denom);
}

/*!
 * Geometric recency distribution over a sample space of size n with a
 * precomputed cumulative table; draws are inverse-CDF, O(log n) each.
 * Rebuild when (lambda, n) changes.
 */
class DecayDistribution {
  public:
    DecayDistribution(double lambda, std::size_t n) : lambda_(lambda), n_(n) {
        if (lambda < 1.0) throw std::invalid_argument("decay ratio must be >= 1");
        if (n == 0) throw std::invalid_argument("decay sample space must be non-empty");
        cdf_.resize(n);
        if (lambda == 1.0) {
            for (std::size_t k = 1; k <= n; ++k)
                cdf_[k - 1] = static_cast<double>(k) / static_cast<double>(n);
        } else {
            // F(k) = (lambda^k - 1) / (lambda^n - 1), in log space
            double log_lambda = std::log(lambda);
            double log_denom = static_cast<double>(n) * log_lambda +
                               std::log1p(-std::exp(-static_cast<double>(n) * log_lambda));
            for (std::size_t k = 1; k <= n; ++k) {
                double log_num = static_cast<double>(k) * log_lambda +
                                 std::log1p(-std::exp(-static_cast<double>(k) * log_lambda));
                cdf_[k - 1] = std::exp(log_num - log_denom);
            }
        }
        cdf_[n - 1] = 1.0;
    }

    double lambda() const { return lambda_; }
    std::size_t size() const { return n_; }

    double probability(std::size_t k) const { return decay_probability(lambda_, n_, k); }

    double cdf(std::size_t k) const {
        if (k < 1 || k > n_) throw std::invalid_argument("decay index out of range");
        return cdf_[k - 1];
    }

    //! Draw a position in 1..n, newer positions more likely when lambda > 1.
    std::size_t sample(Rng& rng) const {
        double u = rng.uniform();
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.end()) --it;  // u can round to cdf_.back()
        return static_cast<std::size_t>(it - cdf_.begin()) + 1;
    }

  private:
    double lambda_;
    std::size_t n_;
    std::vector<double> cdf_;
};

}  // namespace streamrec
