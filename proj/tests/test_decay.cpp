#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "streamrec/decay.hpp"
#include "streamrec/rng.hpp"

using namespace streamrec;

namespace {

// independent oracle: build p_1..p_n by the recurrence p_k = p_{k-1} * lambda
// and normalize by the explicit sum
std::vector<double> recurrence_oracle(double lambda, std::size_t n) {
    std::vector<double> p(n);
    p[0] = 1.0;
    for (std::size_t k = 1; k < n; ++k) p[k] = p[k - 1] * lambda;
    double sum = 0.0;
    for (double x : p) sum += x;
    for (double& x : p) x /= sum;
    return p;
}

}  // namespace

TEST_CASE("lambda = 1 is the uniform limit") {
    for (std::size_t k = 1; k <= 4; ++k)
        CHECK(decay_probability(1.0, 4, k) == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("worked decay examples match the recurrence oracle") {
    auto p = recurrence_oracle(1.1, 4);
    CHECK(decay_probability(1.1, 4, 3) == Catch::Approx(p[2]).epsilon(1e-12));
    CHECK(decay_probability(1.1, 4, 3) == Catch::Approx(0.260719).epsilon(1e-5));

    // explicit normalization of (1, 2)
    CHECK(decay_probability(2.0, 2, 2) == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("decay probability rejects bad arguments") {
    CHECK_THROWS_AS(decay_probability(0.99, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(decay_probability(1.1, 4, 0), std::invalid_argument);
    CHECK_THROWS_AS(decay_probability(1.1, 4, 5), std::invalid_argument);
    CHECK_THROWS_AS(DecayDistribution(0.5, 10), std::invalid_argument);
    CHECK_THROWS_AS(DecayDistribution(1.1, 0), std::invalid_argument);
}

TEST_CASE("probabilities sum to one and follow the recurrence") {
    Rng rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        double lambda = 1.0 + rng.uniform();  // [1, 2)
        std::size_t n = 1 + rng.uniform_int(1000);
        double sum = 0.0;
        for (std::size_t k = 1; k <= n; ++k) sum += decay_probability(lambda, n, k);
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
        for (std::size_t k = 1; k < std::min<std::size_t>(n, 64); ++k) {
            double ratio = decay_probability(lambda, n, k + 1) / decay_probability(lambda, n, k);
            REQUIRE(ratio == Catch::Approx(lambda).margin(1e-9));
        }
    }
}

TEST_CASE("lambda > 1 makes newer strictly more likely") {
    std::size_t n = 128;
    double prev = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        double p = decay_probability(1.05, n, k);
        REQUIRE(p > prev);
        prev = p;
    }
}

TEST_CASE("cdf is consistent with the point probabilities") {
    for (double lambda : {1.0, 1.02, 1.5}) {
        for (std::size_t n : {1ul, 10ul, 512ul}) {
            DecayDistribution dist(lambda, n);
            double acc = 0.0;
            for (std::size_t k = 1; k <= n; ++k) {
                acc += dist.probability(k);
                REQUIRE(dist.cdf(k) == Catch::Approx(acc).margin(1e-9));
            }
            REQUIRE(dist.cdf(n) == 1.0);
        }
    }
}

TEST_CASE("inverse-cdf draws match the distribution empirically") {
    DecayDistribution dist(1.5, 20);
    Rng rng(2024);
    const std::size_t draws = 200000;
    std::vector<std::size_t> counts(21, 0);
    for (std::size_t i = 0; i < draws; ++i) ++counts[dist.sample(rng)];
    for (std::size_t k = 15; k <= 20; ++k) {  // the bins with real mass
        double p = dist.probability(k);
        double se = std::sqrt(p * (1.0 - p) / static_cast<double>(draws));
        double freq = static_cast<double>(counts[k]) / static_cast<double>(draws);
        REQUIRE(std::abs(freq - p) < 4.0 * se + 1e-12);
    }
}
