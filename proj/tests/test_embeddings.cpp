#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "qexp/collection.hpp"
#include "qexp/embeddings.hpp"

using namespace qexp;

namespace {

Vector random_vector(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Vector v(dim);
    for (auto& x : v) x = n(rng);
    return v;
}

long double cosine_reference(const Vector& a, const Vector& b) {
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

TEST_CASE("parse_embeddings") {
    std::stringstream two("cat 1 0 0\ndog 0 1 0.5\n");
    const auto table = parse_embeddings(two);
    CHECK(table.size() == 2);
    CHECK(table.dim() == 3);
    CHECK(table.find("dog")[2] == 0.5);
    CHECK(table.find("cow").empty());

    std::stringstream ragged("cat 1 0 0\ndog 0 1\n");
    try {
        parse_embeddings(ragged);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.where() == 2);
    }
    std::stringstream garbage("cat 1 x 0\n");
    CHECK_THROWS_AS(parse_embeddings(garbage), ParseError);
    std::stringstream empty("");
    CHECK_THROWS_AS(parse_embeddings(empty), ParseError);

    std::stringstream restricted("cat 1 0\ndog 0 1\ncow 1 1\n");
    const std::unordered_set<std::string> keep = {"dog", "cow"};
    const auto subset = parse_embeddings(restricted, &keep);
    CHECK(subset.terms() == std::vector<std::string>{"dog", "cow"});
}

TEST_CASE("table rejects mismatched or duplicate rows") {
    EmbeddingTable table(2);
    table.add("a", std::vector<double>{1, 2});
    CHECK_THROWS(table.add("a", std::vector<double>{1, 2}));
    CHECK_THROWS(table.add("b", std::vector<double>{1, 2, 3}));
}

TEST_CASE("cosine basics") {
    const Vector e1 = {1, 0}, e2 = {0, 1}, v = {3, -4};
    CHECK(cosine(e1, e2) == 0.0);
    CHECK(cosine(v, v) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(cosine(Vector{0, 0}, v), ZeroVectorError);
}

TEST_CASE("cosine matches an extended-precision recompute and is symmetric") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto a = random_vector(200, rng);
        const auto b = random_vector(200, rng);
        const double c = cosine(a, b);
        CHECK(std::abs(static_cast<long double>(c) - cosine_reference(a, b)) < 1e-10L);
        CHECK(std::abs(c - cosine(b, a)) < 1e-12);
        CHECK(c >= -1.0);
        CHECK(c <= 1.0);
    }
}

TEST_CASE("centroid") {
    EmbeddingTable table(2);
    table.add("a", std::vector<double>{1, 2});
    table.add("b", std::vector<double>{3, -2});
    table.add("c", std::vector<double>{0.5, 7});
    table.add("neg_a", std::vector<double>{-1, -2});

    const std::vector<std::string> single = {"a"};
    CHECK(centroid(single, table) == Vector{1, 2});
    const std::vector<std::string> copies = {"c", "c", "c"};
    CHECK(centroid(copies, table) == Vector{0.5, 7});
    const std::vector<std::string> three = {"a", "b", "c"};
    const auto mean = centroid(three, table);
    CHECK(mean[0] == doctest::Approx((1 + 3 + 0.5) / 3.0));
    CHECK(mean[1] == doctest::Approx((2 - 2 + 7) / 3.0));

    const std::vector<std::string> with_oov = {"a", "missing"};
    CHECK(centroid(with_oov, table) == Vector{1, 2});
    const std::vector<std::string> none = {"missing"};
    CHECK_THROWS_AS(centroid(none, table), std::invalid_argument);

    const std::vector<std::string> opposite = {"a", "neg_a"};
    const auto zero = centroid(opposite, table);
    CHECK(zero == Vector{0, 0});
    CHECK_THROWS_AS(cosine(zero, table.find("b")), ZeroVectorError);
}

TEST_CASE("top_k_neighbors equals an exhaustive sort") {
    std::mt19937_64 rng(23);
    EmbeddingTable table(10);
    for (int i = 0; i < 500; ++i) table.add(fmt::format("t{:03}", i), random_vector(10, rng));
    table.add("dup", table.find("t007"));  // exact tie with t007

    for (int trial = 0; trial < 20; ++trial) {
        const auto probe = random_vector(10, rng);
        std::vector<Neighbor> all;
        for (const auto& t : table.terms()) all.push_back({t, cosine(probe, table.find(t))});
        std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
            return a.similarity != b.similarity ? a.similarity > b.similarity : a.term < b.term;
        });
        for (const std::size_t k : {std::size_t{1}, std::size_t{7}, std::size_t{100}, std::size_t{501}, std::size_t{2000}}) {
            const auto got = top_k_neighbors(probe, k, table);
            const std::vector<Neighbor> want(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(k, all.size())));
            CHECK(got == want);
        }
    }
}

TEST_CASE("top_k_neighbors honours exclusions and filters") {
    EmbeddingTable table(2);
    table.add("near", std::vector<double>{1, 0.1});
    table.add("mid", std::vector<double>{1, 1});
    table.add("far", std::vector<double>{-1, 0});
    table.add("zero", std::vector<double>{0, 0});
    const Vector probe = {1, 0};

    auto got = top_k_neighbors(probe, 10, table);
    REQUIRE(got.size() == 3);  // zero row skipped
    CHECK(got[0].term == "near");

    got = top_k_neighbors(probe, 1, table, {"near"});
    REQUIRE(got.size() == 1);
    CHECK(got[0].term == "mid");

    got = top_k_neighbors(probe, 10, table, {}, [](const std::string& t) { return t != "mid"; });
    CHECK(got.size() == 2);
    CHECK(got[1].term == "far");
}
