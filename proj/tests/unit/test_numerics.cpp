#include <doctest.h>

#include <cmath>
#include <vector>

#include "llmcipher/base64.hpp"
#include "llmcipher/errors.hpp"
#include "llmcipher/io.hpp"
#include "llmcipher/numerics.hpp"
#include "llmcipher/prng.hpp"
#include "support/fixtures.hpp"

using namespace llmcipher;

TEST_SUITE("numerics") {
    TEST_CASE("pcg32 matches the reference sequence") {
        Pcg32 rng(42, 54);
        const std::uint32_t expected[] = {0xa15c02b7, 0x7b47f409, 0xba1d3330, 0x83d2f293, 0xbfa4784b, 0xcbed606e};
        for (const auto e : expected) CHECK(rng.next_u32() == e);
    }

    TEST_CASE("pcg32 seed 42 golden values") {
        Pcg32 rng(42, 0);
        CHECK(rng.next_u32() == 565663470u);
        CHECK(rng.next_u32() == 3244226384u);
        CHECK(rng.next_u32() == 2504567229u);
        CHECK(rng.next_u32() == 903561869u);
    }

    TEST_CASE("pcg32 bounded and uniform stay in range") {
        Pcg32 rng(1, 2);
        for (int i = 0; i < 10000; ++i) {
            CHECK(rng.bounded(7) < 7u);
            const double u = rng.uniform();
            CHECK(u >= 0.0);
            CHECK(u < 1.0);
        }
    }

    TEST_CASE("pcg32 shuffle is a seeded permutation") {
        std::vector<int> a(50), b(50);
        for (int i = 0; i < 50; ++i) a[i] = b[i] = i;
        Pcg32 r1(9, 1), r2(9, 1);
        r1.shuffle(std::span<int>(a));
        r2.shuffle(std::span<int>(b));
        CHECK(a == b);
        auto sorted = a;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
    }

    TEST_CASE("euclidean distance examples") {
        const std::vector<double> a{1.5, -2.0, 3.0};
        CHECK(euclidean_distance(a, a) == 0.0);
        CHECK(euclidean_distance(std::vector<double>{3, 4}, std::vector<double>{0, 0}) == doctest::Approx(5.0));
        CHECK_THROWS_AS(euclidean_distance(std::vector<double>{1}, std::vector<double>{1, 2}), DimensionError);
    }

    TEST_CASE("euclidean distance matches long double recomputation on 64-d vectors") {
        Pcg32 rng(3, 3);
        for (int t = 0; t < 50; ++t) {
            const auto a = testing::random_vector(rng, 64), b = testing::random_vector(rng, 64);
            long double sum = 0;
            for (std::size_t i = 0; i < 64; ++i) {
                const long double d = static_cast<long double>(a[i]) - b[i];
                sum += d * d;
            }
            const double oracle = static_cast<double>(std::sqrt(sum));
            CHECK(std::abs(euclidean_distance(a, b) - oracle) <= 1e-6 * oracle);
        }
    }

    TEST_CASE("euclidean distance triangle inequality and symmetry") {
        Pcg32 rng(4, 4);
        for (int t = 0; t < 200; ++t) {
            const auto a = testing::random_vector(rng, 8), b = testing::random_vector(rng, 8),
                       c = testing::random_vector(rng, 8);
            CHECK(euclidean_distance(a, c) <= euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-9);
            CHECK(euclidean_distance(a, b) == euclidean_distance(b, a));
        }
    }

    TEST_CASE("cosine similarity examples") {
        const std::vector<double> a{0.3, -1.2, 2.0};
        CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
        CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
        CHECK(cosine_similarity(std::vector<double>{1, 1}, std::vector<double>{1, 0}) ==
              doctest::Approx(0.7071).epsilon(1e-4));
        CHECK_THROWS_AS(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}), DomainError);
        CHECK_THROWS_AS(cosine_similarity(std::vector<double>{1}, std::vector<double>{1, 0}), DimensionError);
    }

    TEST_CASE("cosine similarity is invariant to positive scaling") {
        Pcg32 rng(5, 5);
        for (int t = 0; t < 100; ++t) {
            auto a = testing::random_vector(rng, 10), b = testing::random_vector(rng, 10);
            const double before = cosine_similarity(a, b);
            for (auto& x : a) x *= 3.5f;
            CHECK(cosine_similarity(a, b) == doctest::Approx(before).epsilon(1e-6));
        }
    }

    TEST_CASE("adam zero gradient is a fixed point") {
        std::vector<double> params{0.5, -1.0, 2.0};
        const auto before = params;
        const std::vector<double> grads(3, 0.0);
        AdamState<double> state(3);
        for (int s = 0; s < 10; ++s) adam_step<double>(params, grads, state, 1e-3);
        CHECK(params == before);
        CHECK(state.step == 10);
    }

    TEST_CASE("adam first step moves by lr against the gradient sign") {
        std::vector<double> params{0.0};
        const std::vector<double> grads{1.0};
        AdamState<double> state(1);
        adam_step<double>(params, grads, state, 1e-4);
        CHECK(params[0] == doctest::Approx(-1e-4).epsilon(1e-6));
        CHECK(state.step == 1);
    }

    TEST_CASE("adam trajectories are reproducible") {
        auto run = [] {
            std::vector<float> p{1.0f, 2.0f};
            AdamState<float> st(2);
            for (int i = 0; i < 20; ++i) {
                const std::vector<float> g{p[0] - 0.5f, 2.0f * p[1]};
                adam_step<float>(p, g, st, 0.01f);
            }
            return p;
        };
        CHECK(run() == run());
    }

    TEST_CASE("adam rejects shape mismatch") {
        std::vector<double> params{0.0, 1.0};
        const std::vector<double> grads{1.0};
        AdamState<double> state(2);
        CHECK_THROWS_AS(adam_step<double>(params, grads, state, 1e-3), DimensionError);
    }

    TEST_CASE("finite differences") {
        const auto constant = finite_diff_grad([](std::span<const double>) { return 4.0; }, {1.0, 2.0});
        CHECK(constant == std::vector<double>{0.0, 0.0});
        const auto square = finite_diff_grad([](std::span<const double> x) { return x[0] * x[0]; }, {3.0});
        CHECK(square[0] == doctest::Approx(6.0).epsilon(1e-4));
        CHECK_THROWS_AS(finite_diff_grad([](std::span<const double>) { return std::nan(""); }, {0.0}), NumericError);
    }

    TEST_CASE("base64 round trip and strict decoding") {
        CHECK(base64::encode(std::vector<std::uint8_t>{'f', 'o', 'o', 'b'}) == "Zm9vYg==");
        const auto bytes = base64::decode("Zm9vYmFy");
        CHECK(std::string(bytes.begin(), bytes.end()) == "foobar");
        CHECK_THROWS_AS(base64::decode("Zm9"), FormatError);
        CHECK_THROWS_AS(base64::decode("Zm9v!mFy"), FormatError);
        const std::vector<float> values{1.0f, -0.0f, 3.4028235e38f, 1e-45f};
        CHECK(base64::encode_f32(std::vector<float>{1.0f}) == "AACAPw==");
        const auto back = base64::decode_f32(base64::encode_f32(values));
        REQUIRE(back.size() == values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            CHECK(std::bit_cast<std::uint32_t>(back[i]) == std::bit_cast<std::uint32_t>(values[i]));
    }

    TEST_CASE("atomic writes replace content and leave no temp file") {
        testing::TempDir dir;
        const auto path = dir / "x.txt";
        write_file_atomic(path, "one");
        write_file_atomic(path, "two");
        CHECK(read_file(path) == "two");
        CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));
        CHECK_THROWS_AS(read_file(dir / "missing.txt"), IoError);
    }
}
