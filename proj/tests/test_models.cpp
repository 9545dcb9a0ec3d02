#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <vector>

#include "streamrec/models.hpp"

using namespace streamrec;

namespace {

std::span<double> group_span(IndividualModel& m, const std::string& name) {
    for (const auto& g : m.parameter_groups())
        if (g.name == name) return m.parameters().subspan(g.offset, g.size);
    FAIL("no parameter group named " + name);
    return {};
}

ModelDims toy_dims(std::size_t users, std::size_t items, std::size_t d,
                   std::vector<std::size_t> widths = {}) {
    ModelDims dims;
    dims.num_users = users;
    dims.num_items = items;
    dims.embedding_dim = d;
    dims.hidden_widths = std::move(widths);
    return dims;
}

std::vector<LabeledExample> random_batch(std::size_t n, std::size_t users, std::size_t items,
                                         Rng& rng) {
    std::vector<LabeledExample> batch;
    for (std::size_t i = 0; i < n; ++i)
        batch.push_back({static_cast<UserId>(rng.uniform_int(users)),
                         static_cast<ItemId>(rng.uniform_int(items)),
                         rng.uniform() < 0.5 ? 0.0 : 1.0});
    return batch;
}

}  // namespace

TEST_CASE("bce loss worked values") {
    CHECK(bce_loss(1.0, 1.0 - 1e-9) == Catch::Approx(0.0).margin(1e-6));
    CHECK(bce_loss(1.0, 0.5) == Catch::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(bce_loss(0.0, 0.5) == Catch::Approx(std::log(2.0)).epsilon(1e-9));
    // clamp keeps the loss finite at the boundary
    CHECK(std::isfinite(bce_loss(1.0, 0.0)));
    CHECK(std::isfinite(bce_loss(0.0, 1.0)));
}

TEST_CASE("gmf prediction matches the hand-computed forward pass") {
    IndividualModel m(ModelKind::Gmf, toy_dims(1, 1, 2));
    auto users = group_span(m, "user_embeddings");
    auto items = group_span(m, "item_embeddings");
    auto w = group_span(m, "output_weights");
    users[0] = 1.0;
    users[1] = 2.0;
    items[0] = 3.0;
    items[1] = 4.0;
    w[0] = 1.0;
    w[1] = 1.0;
    // phi = (3, 8), z = 11
    CHECK(m.predict(0, 0) == Catch::Approx(sigmoid(11.0)).epsilon(1e-12));
    CHECK(m.predict(0, 0) == Catch::Approx(0.99998).margin(1e-5));
}

TEST_CASE("zero embeddings force the bias-only output") {
    IndividualModel m(ModelKind::Gmf, toy_dims(3, 3, 4));
    auto w = group_span(m, "output_weights");
    for (auto& x : w) x = 0.7;  // irrelevant against zero phi
    CHECK(m.predict(1, 2) == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("neumf with a zero fusion layer predicts 0.5 everywhere") {
    Rng rng(11);
    auto m = IndividualModel::initialized(ModelKind::NeuMf, toy_dims(4, 5, 3, {4, 2}), rng);
    auto wf = group_span(m, "fusion_weights");
    for (auto& x : wf) x = 0.0;
    group_span(m, "fusion_bias")[0] = 0.0;
    for (UserId u = 0; u < 4; ++u)
        for (ItemId v = 0; v < 5; ++v) CHECK(m.predict(u, v) == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("initialization follows the prescribed distributions") {
    Rng rng(12);
    SECTION("embeddings are N(0, 0.25)") {
        auto m = IndividualModel::initialized(ModelKind::Gmf, toy_dims(1000, 10, 8), rng);
        auto users = group_span(m, "user_embeddings");
        double mean = 0.0;
        for (double x : users) mean += x;
        mean /= static_cast<double>(users.size());
        double var = 0.0;
        for (double x : users) var += (x - mean) * (x - mean);
        var /= static_cast<double>(users.size());
        CHECK(std::abs(mean) < 0.02);
        CHECK(var == Catch::Approx(0.25).epsilon(0.10));
    }
    SECTION("hidden layers stay inside the Glorot bound") {
        auto m = IndividualModel::initialized(ModelKind::Mlp, toy_dims(5, 5, 8, {8, 4}), rng);
        auto w1 = group_span(m, "hidden1_weights");  // fan_in 16, fan_out 8
        double limit = std::sqrt(6.0 / 24.0);
        for (double x : w1) {
            CHECK(x <= limit);
            CHECK(x >= -limit);
        }
    }
    SECTION("all biases start at exactly zero") {
        auto m = IndividualModel::initialized(ModelKind::NeuMf, toy_dims(5, 5, 4, {4, 2}), rng);
        for (const auto& g : m.parameter_groups())
            if (g.name.find("bias") != std::string::npos)
                for (std::size_t i = g.offset; i < g.offset + g.size; ++i)
                    REQUIRE(m.parameters()[i] == 0.0);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    // d=4 toys, all three kinds, every parameter group, rel. err < 1e-3
    const double h = 1e-4;
    const double l2 = 0.01;
    Rng rng(13);
    auto check_kind = [&](ModelKind kind, std::vector<std::size_t> widths) {
        auto m = IndividualModel::initialized(kind, toy_dims(6, 7, 4, std::move(widths)), rng);
        auto batch = random_batch(10, 6, 7, rng);
        SparseGradients g = m.gradients(batch, l2);
        double max_rel = 0.0;
        for (auto [b, e] : g.touched) {
            for (std::size_t i = b; i < e; ++i) {
                double saved = m.parameters()[i];
                m.parameters()[i] = saved + h;
                double up = m.batch_loss(batch, l2);
                m.parameters()[i] = saved - h;
                double down = m.batch_loss(batch, l2);
                m.parameters()[i] = saved;
                double fd = (up - down) / (2.0 * h);
                double rel = std::abs(fd - g.values[i]) /
                             std::max({std::abs(fd), std::abs(g.values[i]), 1e-4});
                max_rel = std::max(max_rel, rel);
            }
        }
        CAPTURE(static_cast<int>(kind));
        CHECK(max_rel < 1e-3);
    };
    check_kind(ModelKind::Gmf, {});
    check_kind(ModelKind::Mlp, {6, 3});
    check_kind(ModelKind::NeuMf, {6, 3});
}

TEST_CASE("untouched embedding rows receive no gradient or update") {
    Rng rng(14);
    auto m = IndividualModel::initialized(ModelKind::Gmf, toy_dims(10, 10, 4), rng);
    std::vector<double> before(m.parameters().begin(), m.parameters().end());
    std::vector<LabeledExample> batch{{2, 3, 1.0}, {2, 5, 0.0}};
    AdamState adam(m.num_parameters());
    m.train_step(batch, adam, 0.01, 0.001);
    auto groups = m.parameter_groups();
    auto users = groups[0];
    for (UserId u = 0; u < 10; ++u) {
        bool touched = (u == 2);
        bool changed = false;
        for (std::size_t i = 0; i < 4; ++i) {
            std::size_t idx = users.offset + u * 4 + i;
            if (m.parameters()[idx] != before[idx]) changed = true;
        }
        REQUIRE(changed == touched);
    }
}

TEST_CASE("training dynamics") {
    Rng rng(15);
    SECTION("repeated steps on one positive push the prediction up") {
        auto m = IndividualModel::initialized(ModelKind::Gmf, toy_dims(2, 2, 4), rng);
        AdamState adam(m.num_parameters());
        std::vector<LabeledExample> batch{{0, 0, 1.0}};
        double prev = m.predict(0, 0);
        double first = prev;
        for (int step = 0; step < 200; ++step) {
            m.train_step(batch, adam, 0.01, 0.0);
            double now = m.predict(0, 0);
            REQUIRE(now >= prev - 1e-9);
            prev = now;
        }
        CHECK(prev > first);
        CHECK(prev > 0.9);
    }
    SECTION("zero learning rate leaves parameters bit-identical") {
        auto m = IndividualModel::initialized(ModelKind::Mlp, toy_dims(3, 3, 4, {4}), rng);
        std::vector<double> before(m.parameters().begin(), m.parameters().end());
        AdamState adam(m.num_parameters());
        auto batch = random_batch(8, 3, 3, rng);
        m.train_step(batch, adam, 0.0, 0.01);
        REQUIRE(std::memcmp(before.data(), m.parameters().data(),
                            before.size() * sizeof(double)) == 0);
    }
    SECTION("loss decreases on a fixed batch for every model kind") {
        for (auto kind : {ModelKind::Gmf, ModelKind::Mlp, ModelKind::NeuMf}) {
            auto m = IndividualModel::initialized(
                kind, toy_dims(8, 8, 4, kind == ModelKind::Gmf ? std::vector<std::size_t>{}
                                                               : std::vector<std::size_t>{4, 2}),
                rng);
            AdamState adam(m.num_parameters());
            auto batch = random_batch(64, 8, 8, rng);
            double initial = m.train_step(batch, adam, 0.001, 1e-6).mean_bce;
            double final_loss = initial;
            for (int step = 0; step < 199; ++step)
                final_loss = m.train_step(batch, adam, 0.001, 1e-6).mean_bce;
            CAPTURE(static_cast<int>(kind));
            CHECK(final_loss < initial);
        }
    }
    SECTION("pure l2 decays parameter norms every step") {
        IndividualModel m(ModelKind::Gmf, toy_dims(2, 2, 4));
        auto w = group_span(m, "output_weights");
        for (auto& x : w) x = 0.3;  // zero embeddings keep the data gradient at 0
        AdamState adam(m.num_parameters());
        std::vector<LabeledExample> batch{{0, 0, 0.5}};  // yhat = 0.5 exactly
        double prev = 0.0;
        for (double x : w) prev += x * x;
        for (int step = 0; step < 20; ++step) {
            m.train_step(batch, adam, 0.001, 0.1);
            double now = 0.0;
            for (double x : w) now += x * x;
            REQUIRE(now < prev);
            prev = now;
        }
    }
    SECTION("identical seeds give bit-identical parameters after n steps") {
        auto run = [&](std::uint64_t seed) {
            Rng r(seed);
            auto m = IndividualModel::initialized(ModelKind::NeuMf, toy_dims(6, 6, 4, {4, 2}), r);
            AdamState adam(m.num_parameters());
            Rng data_rng(seed + 1);
            for (int step = 0; step < 25; ++step) {
                auto batch = random_batch(16, 6, 6, data_rng);
                m.train_step(batch, adam, 0.001, 1e-6);
            }
            return std::vector<double>(m.parameters().begin(), m.parameters().end());
        };
        auto a = run(77), b = run(77);
        REQUIRE(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("pair embedding is the live concatenation of the two rows") {
    IndividualModel m(ModelKind::Gmf, toy_dims(2, 2, 2));
    auto users = group_span(m, "user_embeddings");
    auto items = group_span(m, "item_embeddings");
    users[0] = 1.0;
    users[1] = 0.0;
    items[2] = 0.0;
    items[3] = 1.0;
    auto e = m.pair_embedding(0, 1);
    REQUIRE(e.size() == 4);
    CHECK(e == std::vector<double>{1.0, 0.0, 0.0, 1.0});

    // the view is live: training a touched user changes it
    Rng rng(16);
    auto trained = IndividualModel::initialized(ModelKind::Gmf, toy_dims(2, 2, 2), rng);
    auto before = trained.pair_embedding(0, 1);
    AdamState adam(trained.num_parameters());
    std::vector<LabeledExample> batch{{0, 1, 1.0}};
    trained.train_step(batch, adam, 0.05, 0.0);
    CHECK(trained.pair_embedding(0, 1) != before);
}

TEST_CASE("neumf exposes its gmf-branch pair embedding") {
    Rng rng(17);
    auto m = IndividualModel::initialized(ModelKind::NeuMf, toy_dims(3, 3, 2, {3}), rng);
    auto gmf_users = group_span(m, "gmf_user_embeddings");
    auto e = m.pair_embedding(1, 0);
    CHECK(e[0] == gmf_users[2]);
    CHECK(e[1] == gmf_users[3]);
}

TEST_CASE("out-of-range ids are rejected") {
    Rng rng(18);
    auto m = IndividualModel::initialized(ModelKind::Gmf, toy_dims(3, 4, 2), rng);
    CHECK_THROWS_AS(m.predict(3, 0), std::out_of_range);
    CHECK_THROWS_AS(m.predict(0, 4), std::out_of_range);
    CHECK_THROWS_AS(m.pair_embedding(5, 0), std::out_of_range);
}

TEST_CASE("embedding table views expose rows of length d") {
    Rng rng(30);
    auto m = IndividualModel::initialized(ModelKind::NeuMf, toy_dims(5, 7, 3, {4}), rng);
    auto users = m.user_table();
    auto items = m.item_table();
    CHECK(users.rows() == 5);
    CHECK(items.rows() == 7);
    CHECK(users.lookup(2).size() == 3);
    CHECK(users.all_finite());
    CHECK(items.all_finite());
    CHECK_THROWS_AS(users.lookup(5), std::out_of_range);
    // the view and pair_embedding agree on the same rows
    auto pair = m.pair_embedding(1, 4);
    auto ue = users.lookup(1);
    auto ie = items.lookup(4);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(pair[i] == ue[i]);
        CHECK(pair[3 + i] == ie[i]);
    }
}

TEST_CASE("a poisoned parameter surfaces as a diagnosed training error") {
    Rng rng(31);
    auto m = IndividualModel::initialized(ModelKind::Gmf, toy_dims(3, 3, 2), rng);
    m.parameters()[0] = std::numeric_limits<double>::quiet_NaN();
    AdamState adam(m.num_parameters());
    std::vector<LabeledExample> batch{{0, 0, 1.0}};
    try {
        m.train_step(batch, adam, 0.01, 0.0);
        FAIL("expected a non-finite gradient error");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("non-finite") != std::string::npos);
        CHECK(msg.find("user_embeddings") != std::string::npos);  // norm snapshot
    }
}

TEST_CASE("predictions stay strictly inside (0,1) across random parameterizations") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        auto m = IndividualModel::initialized(ModelKind::NeuMf, toy_dims(10, 10, 4, {4, 2}), rng);
        for (int i = 0; i < 500; ++i) {
            double y = m.predict(static_cast<UserId>(rng.uniform_int(10)),
                                 static_cast<ItemId>(rng.uniform_int(10)));
            REQUIRE(y > 0.0);
            REQUIRE(y < 1.0);
        }
    }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    Rng rng(19);
    for (auto kind : {ModelKind::Gmf, ModelKind::Mlp, ModelKind::NeuMf}) {
        auto m = IndividualModel::initialized(
            kind, toy_dims(5, 6, 3, kind == ModelKind::Gmf ? std::vector<std::size_t>{}
                                                           : std::vector<std::size_t>{4, 2}),
            rng);
        std::stringstream buf;
        m.save(buf);
        auto loaded = IndividualModel::load(buf);
        REQUIRE(loaded.kind() == m.kind());
        REQUIRE(loaded.dims() == m.dims());
        REQUIRE(loaded.num_parameters() == m.num_parameters());
        REQUIRE(std::memcmp(loaded.parameters().data(), m.parameters().data(),
                            m.num_parameters() * sizeof(double)) == 0);
    }
}

TEST_CASE("checkpoint load rejects garbage") {
    std::stringstream buf;
    buf << "definitely not a checkpoint";
    CHECK_THROWS_AS(IndividualModel::load(buf), std::runtime_error);
}
