#include <doctest.h>

#include <cmath>
#include <set>

#include "llmcipher/contrastive.hpp"
#include "llmcipher/errors.hpp"
#include "llmcipher/io.hpp"
#include "llmcipher/knn.hpp"
#include "llmcipher/numerics.hpp"
#include "support/fixtures.hpp"

using namespace llmcipher;
using testing::make_record;

namespace {

/// Two classes 20 sigma apart in 16-d.
EmbeddingSet separable(std::size_t n, std::uint64_t seed, const std::string& prefix) {
    testing::ClusterSpec spec;
    spec.labels = {"human", "machine_gen"};
    spec.domains = {"d"};
    spec.separation = 20.0 / std::sqrt(2.0);
    return testing::make_clusters(spec, n, seed, prefix);
}

ContrastiveConfig toy_config() {
    ContrastiveConfig c;
    c.epochs = 15;
    c.learning_rate = 1e-3;
    c.batch_size = 32;
    return c;
}

}  // namespace

TEST_SUITE("contrastive") {
    TEST_CASE("pair labels") {
        CHECK(pair_label("human", "human") == 1);
        CHECK(pair_label("chatgpt", "dolly") == 1);
        CHECK(pair_label("human", "bloomz") == 0);
        CHECK(pair_label("bloomz", "human") == 0);
    }

    TEST_CASE("triplet loss examples") {
        const std::vector<float> o{0, 0}, n2{2, 0}, one{1, 0}, neg1{0, 1}, three{3, 0};
        CHECK(triplet_loss(o, o, n2, 1.0) == 0.0);
        CHECK(triplet_loss(o, one, neg1, 1.0) == doctest::Approx(1.0));
        CHECK(triplet_loss(o, three, one, 0.5) == doctest::Approx(2.5));
        CHECK_THROWS_AS(triplet_loss(o, std::vector<float>{1}, one, 1.0), DimensionError);
    }

    TEST_CASE("one triplet per record with valid pair labels") {
        const auto set = EmbeddingSet::from_records({make_record("h1", "human", "d", {0}),
                                                     make_record("h2", "human", "d", {1}),
                                                     make_record("m1", "gpt", "d", {2}),
                                                     make_record("m2", "dolly", "d", {3})});
        const auto triplets = sample_triplets(set, 0, ContrastiveConfig{});
        REQUIRE(triplets.size() == 4);
        std::map<std::string, std::string> label;
        for (const auto& r : set.records()) label[r.id] = r.label;
        for (std::size_t i = 0; i < triplets.size(); ++i) {
            const auto& t = triplets[i];
            CHECK(t.anchor_id == set[i].id);
            CHECK(pair_label(label[t.anchor_id], label[t.positive_id]) == 1);
            CHECK(pair_label(label[t.anchor_id], label[t.negative_id]) == 0);
            CHECK(std::set<std::string>{t.anchor_id, t.positive_id, t.negative_id}.size() == 3);
        }
        CHECK(sample_triplets(set, 0, ContrastiveConfig{}) == triplets);
    }

    TEST_CASE("generator granularity and singleton classes") {
        const auto set = EmbeddingSet::from_records({make_record("h1", "human", "d", {0}),
                                                     make_record("h2", "human", "d", {1}),
                                                     make_record("m1", "gpt", "d", {2}),
                                                     make_record("m2", "dolly", "d", {3})});
        ContrastiveConfig generator;
        generator.granularity = ClassGranularity::generator;
        try {
            sample_triplets(set, 0, generator);
            FAIL("expected SamplingError");
        } catch (const SamplingError& e) {
            CHECK(std::string(e.what()).find("dolly") != std::string::npos);
        }
        const auto only_humans = EmbeddingSet::from_records(
            {make_record("h1", "human", "d", {0}), make_record("h2", "human", "d", {1})});
        CHECK_THROWS_AS(sample_triplets(only_humans, 0, ContrastiveConfig{}), SamplingError);
    }

    TEST_CASE("positives and negatives cover their classes") {
        std::vector<std::string> labels;
        for (int i = 0; i < 6; ++i) labels.push_back(i < 3 ? "human" : "gpt");
        std::set<std::size_t> positives_of_0, negatives_of_0;
        ContrastiveConfig config;
        for (std::size_t epoch = 0; epoch < 200; ++epoch) {
            const auto t = sample_triplet_indices(labels, epoch, config);
            positives_of_0.insert(t[0].positive);
            negatives_of_0.insert(t[0].negative);
        }
        CHECK(positives_of_0 == std::set<std::size_t>{1, 2});
        CHECK(negatives_of_0 == std::set<std::size_t>{3, 4, 5});
    }

    TEST_CASE("triplet gradients match finite differences on [4,6,8]") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto net = DenseNetwork<double>::he_uniform({4, 6, 8}, seed);
            Pcg32 rng(seed, 11);
            DenseNetwork<double>::Matrix a(4, 4), p(4, 4), n(4, 4);
            for (auto* m : {&a, &p, &n})
                for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.normal();
            const double margin = 5.0;
            const auto analytic = triplet_backward<double>(net, a, p, n, margin);
            std::vector<double> flat;
            for (std::size_t l = 0; l < net.layer_count(); ++l) {
                const auto& gw = analytic.gradients.weight[l];
                const auto& gb = analytic.gradients.bias[l];
                flat.insert(flat.end(), gw.data(), gw.data() + gw.size());
                flat.insert(flat.end(), gb.data(), gb.data() + gb.size());
            }
            const auto numeric = finite_diff_grad(
                [&](std::span<const double> params) {
                    auto copy = net;
                    copy.assign(params);
                    return triplet_backward<double>(copy, a, p, n, margin).loss;
                },
                net.flatten());
            for (std::size_t i = 0; i < flat.size(); ++i)
                CHECK(std::abs(flat[i] - numeric[i]) / std::max({std::abs(flat[i]), std::abs(numeric[i]), 1e-6}) <
                      1e-4);
        }
    }

    TEST_CASE("projection width is 512 unless overridden") {
        CHECK(desk_projection_dims(16) == std::vector<std::size_t>{16, 1024, 512, 512});
        CHECK(full_scale_projection_dims(2048) == std::vector<std::size_t>{2048, 8192, 8192, 8192, 512});
        CHECK_THROWS_AS(projection_init({4, 6, 8}, 1), ConfigError);
        const auto toy = projection_init({4, 6, 8}, 1, true);
        CHECK(toy.project(std::vector<float>{1, 2, 3, 4}).size() == 8);
        const auto std_proj = projection_init({4, 16, 512}, 1);
        CHECK(std_proj.project(std::vector<float>{1, 2, 3, 4}).size() == 512);
    }

    TEST_CASE("full-scale preset holds about 150M parameters") {
        const auto dims = full_scale_projection_dims(2048);
        std::size_t params = 0;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) params += dims[l] * dims[l + 1] + dims[l + 1];
        CHECK(params > 140'000'000);
        CHECK(params < 160'000'000);
    }

    TEST_CASE("training separates blobs and classifies held-out points") {
        const auto train = separable(200, 1, "tr");
        const auto test = separable(100, 2, "te");
        const auto result = train_projection(train, EmbeddingSet{}, toy_config(), {16, 32, 512});
        CHECK(result.log.epochs.size() == 15);
        CHECK(result.log.epochs.back().train_loss < 0.05 * toy_config().margin);

        const auto knn = fit_projected_knn(result.projection, train, 5);
        std::size_t correct = 0;
        for (const auto& r : test.records()) correct += project_and_classify(result.projection, knn, r.vector).label == r.label;
        CHECK(static_cast<double>(correct) / test.size() >= 0.98);

        double within = 0, across = 0;
        std::size_t nw = 0, na = 0;
        const auto z = result.projection.project_all([&] {
            std::vector<std::vector<float>> xs;
            for (const auto& r : test.records()) xs.push_back(r.vector);
            return xs;
        }());
        for (std::size_t i = 0; i < z.size(); ++i)
            for (std::size_t j = i + 1; j < z.size(); ++j) {
                const double d = euclidean_distance(z[i], z[j]);
                if (test[i].label == test[j].label) {
                    within += d;
                    ++nw;
                } else {
                    across += d;
                    ++na;
                }
            }
        CHECK(within / nw < across / na);
    }

    TEST_CASE("training point is its own nearest neighbour") {
        const auto train = separable(40, 3, "p");
        const auto proj = projection_init({16, 32, 512}, 3);
        const auto knn = fit_projected_knn(proj, train, 5);
        const auto pred = knn_predict(knn, proj.project(train[7].vector));
        CHECK(pred.neighbors[0].id == train[7].id);
        CHECK(pred.neighbors[0].distance == 0.0);
    }

    TEST_CASE("seeded training is reproducible and artifacts round-trip") {
        testing::TempDir dir;
        const auto train = separable(60, 4, "s");
        auto config = toy_config();
        config.epochs = 3;
        const auto a = train_projection(train, train, config, {16, 32, 512});
        const auto b = train_projection(train, train, config, {16, 32, 512});
        CHECK(serialize_projection(a.projection) == serialize_projection(b.projection));
        CHECK(a.log.epochs.back().val_loss.has_value());
        save_projection(a.projection, dir / "p.json");
        CHECK(read_file(dir / "p.json") == serialize_projection(a.projection));
        const auto back = load_projection(dir / "p.json");
        CHECK(back.network == a.projection.network);
        const auto j = nlohmann::json::parse(read_file(dir / "p.json"));
        CHECK(j["format"] == "llmcipher-cproj-v1");
        CHECK(j["margin"] == 1.0);
    }

    TEST_CASE("config validation") {
        ContrastiveConfig c;
        c.margin = 0.0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        CHECK(granularity_from_string("generator") == ClassGranularity::generator);
        CHECK_THROWS_AS(granularity_from_string("tokens"), ConfigError);
    }
}
