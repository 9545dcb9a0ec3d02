#pragma once

#include <bit>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>

namespace streamrec {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent sub-stream seed from a base seed plus up to three
// tags (e.g. purpose, iteration, model index). Same inputs, same seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag_a = 0,
                                 std::uint64_t tag_b = 0, std::uint64_t tag_c = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ tag_a);
    h = splitmix64(h ^ tag_b);
    h = splitmix64(h ^ tag_c);
    return h;
}

// Sub-stream purpose tags. Keeping these distinct is what makes runs
// reproducible independently of worker count or model count.
enum StreamTag : std::uint64_t {
    kTagModelInit = 1,
    kTagSampling = 2,
    kTagEvalNegatives = 3,
    kTagSynthesis = 4,
};

/*!
 * Deterministic random source with hand-rolled distributions.
 *
 * std::*_distribution output is implementation-defined; the explicit
 * algorithms here make byte-identical replay part of the contract.
 */
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    //! Uniform double in [0, 1), 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    //! Uniform integer in [0, bound). bound must be positive.
    std::uint64_t uniform_int(std::uint64_t bound) {
        assert(bound > 0);
        if (bound == 1) return 0;
        std::uint64_t mask = ~std::uint64_t{0} >> std::countl_zero(bound - 1);
        std::uint64_t r;
        do {
            r = next() & mask;
        } while (r >= bound);
        return r;
    }

    //! Gaussian via Box-Muller (cosine branch only; one value per call).
    double normal(double mean, double stddev) {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        return mean + stddev * z;
    }

    //! Uniform double in [lo, hi).
    double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  private:
    std::mt19937_64 gen_;
};

}  // namespace streamrec
