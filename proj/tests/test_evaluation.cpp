#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "qexp/evaluation.hpp"

using namespace qexp;

namespace {

RankedList ranked_from_pattern(const std::vector<int>& pattern, Qrels& qrels, const std::string& qid = "q") {
    RankedList list{qid, {}};
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        const auto doc = fmt::format("d{}", i);
        list.docs.push_back({doc, -static_cast<double>(i)});
        if (pattern[i]) qrels.set(qid, doc, 1);
    }
    return list;
}

double naive_ap(const std::vector<int>& rel, std::size_t total_relevant, std::size_t depth) {
    double sum = 0.0;
    for (std::size_t i = 0; i < std::min(depth, rel.size()); ++i) {
        if (!rel[i]) continue;
        double seen = 0.0;
        for (std::size_t j = 0; j <= i; ++j) seen += rel[j];
        sum += seen / static_cast<double>(i + 1);
    }
    return sum / static_cast<double>(total_relevant);
}

double boost_p(double t, int df) {
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

TEST_CASE("average precision by hand") {
    Qrels qrels;
    const auto list = ranked_from_pattern({1, 0, 1, 0, 0}, qrels);
    CHECK(average_precision(list, qrels) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-15));

    Qrels perfect_q;
    const auto perfect = ranked_from_pattern({1, 1, 1, 0}, perfect_q);
    CHECK(average_precision(perfect, perfect_q) == 1.0);

    Qrels none_q;
    auto none = ranked_from_pattern({0, 0, 0}, none_q);
    none_q.set("q", "elsewhere", 1);
    CHECK(average_precision(none, none_q) == 0.0);

    // relevant documents beyond the depth still count in R
    Qrels deep_q;
    const auto deep = ranked_from_pattern({1, 0, 1}, deep_q);
    CHECK(average_precision(deep, deep_q, 2) == doctest::Approx(0.5));

    Qrels empty_q;
    CHECK_THROWS_AS(average_precision(ranked_from_pattern({0}, empty_q), empty_q), std::domain_error);
}

TEST_CASE("average precision matches a naive implementation on random fixtures") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 1 + rng() % 40;
        std::vector<int> rel(n);
        for (auto& r : rel) r = rng() % 3 == 0;
        Qrels qrels;
        const auto list = ranked_from_pattern(rel, qrels);
        const auto unretrieved = rng() % 3;
        for (std::size_t u = 0; u < unretrieved; ++u) qrels.set("q", fmt::format("missing{}", u), 1);
        const auto total = static_cast<std::size_t>(std::count(rel.begin(), rel.end(), 1)) + unretrieved;
        if (total == 0) continue;
        const auto depth = 1 + rng() % 50;
        CHECK(std::abs(average_precision(list, qrels, depth) - naive_ap(rel, total, depth)) < 1e-12);
    }
}

TEST_CASE("precision at 10") {
    Qrels qrels;
    const auto short_list = ranked_from_pattern({1, 0, 1, 0, 0, 1, 0}, qrels);
    CHECK(precision_at(short_list, qrels) == doctest::Approx(0.3));

    Qrels all_q;
    const auto all = ranked_from_pattern(std::vector<int>(12, 1), all_q);
    CHECK(precision_at(all, all_q) == 1.0);

    Qrels mixed_q;
    const auto mixed = ranked_from_pattern({0, 1, 1, 0, 0, 0, 1, 0, 0, 0, 1, 1}, mixed_q);
    CHECK(precision_at(mixed, mixed_q) == doctest::Approx(0.3));
    CHECK(precision_at(mixed, mixed_q, 3) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("robustness index") {
    const PerQuery base = {{"a", 0.1}, {"b", 0.2}, {"c", 0.3}, {"d", 0.4}};
    CHECK(robustness_index(base, {{"a", 0.2}, {"b", 0.3}, {"c", 0.4}, {"d", 0.5}}) == 1.0);
    CHECK(robustness_index(base, {{"a", 0.0}, {"b", 0.3}, {"c", 0.2}, {"d", 0.5}}) == 0.0);
    CHECK(robustness_index(base, {{"a", 0.0}, {"b", 0.1}, {"c", 0.2}, {"d", 0.3}}) == -1.0);
    // a tied query only grows the denominator
    CHECK(robustness_index(base, {{"a", 0.2}, {"b", 0.2}, {"c", 0.4}, {"d", 0.5}}) == doctest::Approx(0.75));
}

TEST_CASE("paired t-test against Boost") {
    const std::vector<double> base = {0.21, 0.35, 0.10, 0.44, 0.28, 0.33, 0.19, 0.50, 0.05, 0.27};
    const std::vector<double> treat = {0.25, 0.31, 0.18, 0.47, 0.36, 0.34, 0.22, 0.49, 0.12, 0.30};
    const auto r = paired_t_test(base, treat);
    double mean = 0, ss = 0;
    for (std::size_t i = 0; i < base.size(); ++i) mean += treat[i] - base[i];
    mean /= 10.0;
    for (std::size_t i = 0; i < base.size(); ++i) ss += std::pow(treat[i] - base[i] - mean, 2);
    const double t = mean / std::sqrt(ss / 9.0 / 10.0);
    CHECK(r.df == 9);
    CHECK(r.t == doctest::Approx(t).epsilon(1e-12));
    CHECK(std::abs(r.p - boost_p(t, 9)) < 1e-8);

    const auto swapped = paired_t_test(treat, base);
    CHECK(swapped.t == doctest::Approx(-r.t).epsilon(1e-14));
    CHECK(swapped.p == doctest::Approx(r.p).epsilon(1e-14));
}

TEST_CASE("t distribution matches Boost over a grid") {
    for (const int df : {1, 2, 3, 5, 9, 29, 100, 249}) {
        for (double t = -12.0; t <= 12.0; t += 0.37) {
            boost::math::students_t dist(df);
            CHECK(std::abs(student_t_cdf(t, df) - boost::math::cdf(dist, t)) < 1e-10);
        }
    }
}

TEST_CASE("paired t-test degenerate inputs") {
    const std::vector<double> base = {0.1, 0.2, 0.3, 0.4};
    const auto sym = paired_t_test(base, std::vector<double>{0.2, 0.1, 0.4, 0.3});
    CHECK(sym.t == doctest::Approx(0.0));
    CHECK(sym.p == doctest::Approx(1.0));
    CHECK_THROWS_AS(paired_t_test(base, std::vector<double>{0.2, 0.3, 0.4, 0.5}), std::domain_error);
    CHECK_THROWS_AS(paired_t_test(std::vector<double>{0.1}, std::vector<double>{0.2}), std::domain_error);
    CHECK_THROWS(paired_t_test(base, std::vector<double>{0.1}));
}

TEST_CASE("evaluate and compare") {
    Qrels qrels;
    const std::vector<RankedList> runs = {ranked_from_pattern({1, 0, 1}, qrels, "a"),
                                          ranked_from_pattern({0, 1}, qrels, "b")};
    const auto res = evaluate(runs, qrels);
    CHECK(res.ap.at("a") == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    CHECK(res.ap.at("b") == doctest::Approx(0.5));
    CHECK(res.map == doctest::Approx(((1.0 + 2.0 / 3.0) / 2.0 + 0.5) / 2.0));
    CHECK(res.mean_p10 == doctest::Approx(0.15));

    const auto better = summarize({{"a", 0.9}, {"b", 0.7}}, {{"a", 0.3}, {"b", 0.2}});
    const auto cmp = compare(res, better);
    CHECK(cmp.ri == 1.0);
    REQUIRE(cmp.test.has_value());
    CHECK(cmp.test->df == 1);
}
