#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "streamrec/ensemble.hpp"
#include "streamrec/rng.hpp"

using namespace streamrec;

namespace {

std::vector<MemoryEntry> random_memory(std::size_t size, std::size_t dim, Rng& rng) {
    std::vector<MemoryEntry> entries(size);
    for (auto& e : entries) {
        e.accuracy = rng.uniform();
        e.user = static_cast<UserId>(rng.uniform_int(100));
        e.item = static_cast<ItemId>(rng.uniform_int(100));
        e.embedding.resize(dim);
        for (double& x : e.embedding) x = rng.normal(0.0, 1.0);
    }
    return entries;
}

// brute-force oracle: full sort of all similarities, same tie rule
double confidence_oracle(const std::vector<MemoryEntry>& entries,
                         const std::vector<double>& target, std::size_t e) {
    std::vector<std::pair<double, std::size_t>> sims;
    for (std::size_t i = 0; i < entries.size(); ++i)
        sims.emplace_back(cosine_similarity(target, entries[i].embedding), i);
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::size_t take = std::min(e, sims.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < take; ++i) acc += entries[sims[i].second].accuracy;
    return acc / static_cast<double>(take);
}

}  // namespace

TEST_CASE("cosine similarity basics") {
    std::vector<double> a{1.0, 1.0}, b{1.0, 0.0};
    CHECK(cosine_similarity(a, a) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}) ==
          Catch::Approx(0.0).margin(1e-15));
    CHECK(cosine_similarity(a, b) == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(cosine_similarity(std::vector<double>{0.0, 0.0}, b) == 0.0);
    CHECK_THROWS_AS(cosine_similarity(a, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("confidence worked examples") {
    SECTION("singleton memory returns its accuracy for any target") {
        AccuracyMemory mem;
        mem.replace({{0.7, 0, 0, {1.0, 2.0}, 0.0}});
        auto c = confidence(mem, std::vector<double>{-3.0, 0.5}, 10);
        REQUIRE(c.has_value());
        CHECK(*c == Catch::Approx(0.7).epsilon(1e-12));
    }
    SECTION("e >= |P| means the full-memory mean") {
        AccuracyMemory mem;
        mem.replace({{1.0, 0, 0, {1.0, 0.0}, 0.0},
                     {0.0, 0, 1, {0.0, 1.0}, 0.0},
                     {0.5, 1, 0, {-1.0, 0.0}, 0.0}});
        auto c = confidence(mem, std::vector<double>{1.0, 1.0}, 10);
        REQUIRE(c.has_value());
        CHECK(*c == Catch::Approx(0.5).epsilon(1e-12));
    }
    SECTION("top-2 neighborhood picks the two most similar tuples") {
        AccuracyMemory mem;
        mem.replace({{1.0, 0, 0, {1.0, 0.0}, 0.0},
                     {0.0, 0, 1, {0.9, 0.1}, 0.0},
                     {0.5, 1, 0, {0.0, 1.0}, 0.0}});
        std::vector<double> target{1.0, 0.05};  // closest to the first two
        auto c = confidence(mem, target, 2);
        REQUIRE(c.has_value());
        CHECK(*c == Catch::Approx(0.5).epsilon(1e-12));
    }
    SECTION("empty memory signals cold start") {
        AccuracyMemory mem;
        CHECK_FALSE(confidence(mem, std::vector<double>{1.0}, 3).has_value());
    }
}

TEST_CASE("confidence matches the brute-force oracle on random memories") {
    Rng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        std::size_t size = 1 + rng.uniform_int(100);
        std::size_t dim = 2 + rng.uniform_int(8);
        std::size_t e = 1 + rng.uniform_int(20);
        auto entries = random_memory(size, dim, rng);
        std::vector<double> target(dim);
        for (double& x : target) x = rng.normal(0.0, 1.0);
        AccuracyMemory mem;
        mem.replace(entries);
        auto got = confidence(mem, target, e);
        REQUIRE(got.has_value());
        REQUIRE(*got == Catch::Approx(confidence_oracle(entries, target, e)).epsilon(1e-12));
    }
}

TEST_CASE("fusion weights worked examples") {
    SECTION("symmetry") {
        auto fw = fusion_weights(std::vector<double>{0.5, 0.5});
        CHECK(fw[0] == Catch::Approx(0.5).epsilon(1e-12));
        CHECK(fw[1] == Catch::Approx(0.5).epsilon(1e-12));
    }
    SECTION("c = (0.8, 0.2) gives (16/17, 1/17)") {
        auto fw = fusion_weights(std::vector<double>{0.8, 0.2});
        CHECK(fw[0] == Catch::Approx(16.0 / 17.0).epsilon(1e-12));
        CHECK(fw[1] == Catch::Approx(1.0 / 17.0).epsilon(1e-12));
    }
    SECTION("c = (0.99, 0.5) sits exactly at the clamp boundary") {
        auto fw = fusion_weights(std::vector<double>{0.99, 0.5});
        CHECK(fw[0] == Catch::Approx(0.99).epsilon(1e-12));
        CHECK(fw[1] == Catch::Approx(0.01).epsilon(1e-12));
    }
    SECTION("degenerate confidences stay finite thanks to the clamp") {
        auto fw = fusion_weights(std::vector<double>{1.0, 0.0});
        CHECK(std::isfinite(fw[0]));
        CHECK(fw[0] + fw[1] == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("fusion weight properties") {
    Rng rng(22);
    for (int trial = 0; trial < 500; ++trial) {
        std::size_t o = 2 + rng.uniform_int(7);
        std::vector<double> c(o);
        for (double& x : c) x = rng.uniform();
        auto fw = fusion_weights(c);

        double sum = std::accumulate(fw.begin(), fw.end(), 0.0);
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
        for (double w : fw) REQUIRE(w >= 0.0);

        // permutation equivariance: reversing c reverses fw
        std::vector<double> rc(c.rbegin(), c.rend());
        auto rfw = fusion_weights(rc);
        for (std::size_t i = 0; i < o; ++i)
            REQUIRE(rfw[i] == Catch::Approx(fw[o - 1 - i]).margin(1e-12));

        // monotonicity: bumping one confidence (inside the clamp region)
        // raises its weight and lowers every other
        std::size_t pick = rng.uniform_int(o);
        if (c[pick] < 0.95 && c[pick] > 0.02) {
            std::vector<double> c2 = c;
            c2[pick] += 0.02;
            auto fw2 = fusion_weights(c2);
            REQUIRE(fw2[pick] > fw[pick]);
            for (std::size_t i = 0; i < o; ++i)
                if (i != pick) REQUIRE(fw2[i] < fw[i]);
        }
    }
}

TEST_CASE("fuse worked examples and convexity") {
    SECTION("agreement is preserved under any weights") {
        auto fw = fusion_weights(std::vector<double>{0.9, 0.3, 0.5});
        std::vector<double> preds{0.7, 0.7, 0.7};
        CHECK(fuse(preds, fw) == Catch::Approx(0.7).epsilon(1e-12));
    }
    SECTION("one-hot weights select that model") {
        std::vector<double> preds{0.2, 0.9};
        std::vector<double> fw{0.0, 1.0};
        CHECK(fuse(preds, fw) == Catch::Approx(0.9).epsilon(1e-12));
    }
    SECTION("worked dot product") {
        CHECK(fuse(std::vector<double>{0.2, 0.8}, std::vector<double>{0.25, 0.75}) ==
              Catch::Approx(0.65).epsilon(1e-12));
    }
    SECTION("length mismatch is an error") {
        CHECK_THROWS_AS(fuse(std::vector<double>{0.2}, std::vector<double>{0.5, 0.5}),
                        std::invalid_argument);
    }
    SECTION("fused value stays inside the prediction envelope") {
        Rng rng(23);
        for (int t = 0; t < 300; ++t) {
            std::size_t o = 1 + rng.uniform_int(8);
            std::vector<double> preds(o), c(o);
            for (auto& x : preds) x = rng.uniform();
            for (auto& x : c) x = rng.uniform();
            double fused = fuse(preds, fusion_weights(c));
            REQUIRE(fused >= *std::min_element(preds.begin(), preds.end()) - 1e-12);
            REQUIRE(fused <= *std::max_element(preds.begin(), preds.end()) + 1e-12);
        }
    }
}

TEST_CASE("averaging baseline") {
    CHECK(avg_fuse(std::vector<double>{0.2, 0.8}) == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(avg_fuse(std::vector<double>{0.42}) == Catch::Approx(0.42).epsilon(1e-12));
    CHECK_THROWS_AS(avg_fuse({}), std::invalid_argument);
    // equals fuse with uniform weights
    std::vector<double> preds{0.1, 0.5, 0.9};
    std::vector<double> uniform(3, 1.0 / 3.0);
    CHECK(avg_fuse(preds) == Catch::Approx(fuse(preds, uniform)).epsilon(1e-12));
}

TEST_CASE("adaw baseline") {
    std::vector<double> preds{0.2, 0.8};
    SECTION("equal global accuracies reduce to averaging") {
        CHECK(adaw_fuse(preds, std::vector<double>{0.6, 0.6}) ==
              Catch::Approx(avg_fuse(preds)).epsilon(1e-12));
    }
    SECTION("global accuracies (0.8, 0.2) weight like the worked fw example") {
        double expected = 0.2 * (16.0 / 17.0) + 0.8 * (1.0 / 17.0);
        CHECK(adaw_fuse(preds, std::vector<double>{0.8, 0.2}) ==
              Catch::Approx(expected).epsilon(1e-12));
    }
    SECTION("cold start falls back to averaging") {
        CHECK(adaw_fuse(preds, {}) == Catch::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("accuracy memory is replaced wholesale") {
    AccuracyMemory mem;
    Rng rng(24);
    auto first = random_memory(256, 4, rng);
    mem.replace(first);
    REQUIRE(mem.size() == 256);
    auto second = random_memory(100, 4, rng);
    second[0].user = 12345;
    mem.replace(second);
    REQUIRE(mem.size() == 100);
    CHECK(mem.entries()[0].user == 12345);
    for (const auto& e : mem.entries()) {
        CHECK(e.accuracy >= 0.0);
        CHECK(e.accuracy <= 1.0);
    }
}
