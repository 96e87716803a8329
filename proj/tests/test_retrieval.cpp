#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "qexp/collection.hpp"
#include "qexp/retrieval.hpp"
#include "support/synthetic.hpp"

using namespace qexp;

namespace {

const std::filesystem::path kMini = std::filesystem::path(QEXP_SOURCE_DIR) / "data" / "mini";

/// Scores straight from the raw token lists, without the index.
double naive_score(const QueryModel& q, const Document& doc, const std::vector<Document>& docs, double mu) {
    std::map<std::string, double> cf;
    double total = 0.0;
    for (const auto& d : docs) {
        for (const auto& t : d.terms) cf[t] += 1.0;
        total += static_cast<double>(d.terms.size());
    }
    double score = 0.0;
    for (const auto& [term, w] : q.weights) {
        if (!cf.contains(term)) continue;
        const double tf = static_cast<double>(std::count(doc.terms.begin(), doc.terms.end(), term));
        score += w * std::log((tf + mu * cf[term] / total) / (static_cast<double>(doc.terms.size()) + mu));
    }
    return score;
}

std::vector<ScoredDoc> naive_ranking(const QueryModel& q, const std::vector<Document>& docs, double mu,
                                     std::size_t depth) {
    std::vector<ScoredDoc> out;
    for (const auto& d : docs) {
        const bool matches = std::any_of(q.weights.begin(), q.weights.end(), [&](const auto& kv) {
            return kv.second > 0 && std::find(d.terms.begin(), d.terms.end(), kv.first) != d.terms.end();
        });
        if (matches) out.push_back({d.doc_id, naive_score(q, d, docs, mu)});
    }
    std::sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
    });
    if (out.size() > depth) out.resize(depth);
    return out;
}

}  // namespace

TEST_CASE("qlm_score degenerate cases") {
    const std::vector<Document> one = {{"d1", {"a"}}};
    const auto idx = build_index(one);
    QueryModel q{"1", {{"a", 1.0}}};
    CHECK(qlm_score(q, 0, idx, 1.0) == doctest::Approx(0.0).epsilon(1e-15));

    QueryModel with_missing{"1", {{"a", 1.0}, {"zzz", 3.0}}};
    CHECK(qlm_score(with_missing, 0, idx, 1.0) == qlm_score(q, 0, idx, 1.0));

    CHECK(retrieve(QueryModel{"1", {{"zzz", 1.0}}}, idx).docs.empty());
}

TEST_CASE("QueryModel validation") {
    CHECK_THROWS_AS(QueryModel({"q", {}}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(QueryModel({"q", {{"a", 0.0}}}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(QueryModel({"q", {{"a", -1.0}, {"b", 2.0}}}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(QueryModel({"q", {{"a", NAN}}}).validate(), std::invalid_argument);
    CHECK_NOTHROW(QueryModel({"q", {{"a", 0.0}, {"b", 0.5}}}).validate());

    const Tokens terms = {"a", "b", "a"};
    const auto plain = query_from_terms("q", terms);
    CHECK(plain.weights.at("a") == 2.0);
    const auto norm = normalized_query("q", terms);
    CHECK(norm.total_weight() == doctest::Approx(1.0));
    CHECK(norm.weights.at("b") == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("scores and rankings agree with a brute-force scorer on the mini collection") {
    const auto docs = ingest_trec_docs(kMini / "docs", inquery_stopwords());
    const auto idx = build_index(docs);
    const std::vector<QueryModel> queries = {
        {"a", {{"solar", 1.0}, {"power", 1.0}}},
        {"b", {{"volcano", 0.3}, {"crater", 0.5}, {"lava", 0.2}}},
        {"c", {{"work", 1.0}, {"chess", 2.0}, {"nonexistent", 1.0}}},
    };
    for (const auto& q : queries) {
        for (std::uint32_t d = 0; d < idx.num_docs(); ++d) {
            CHECK(std::abs(qlm_score(q, d, idx, 1000.0) - naive_score(q, docs[d], docs, 1000.0)) < 1e-12);
        }
        const auto ranked = retrieve(q, idx, 1000.0, 1000);
        const auto expected = naive_ranking(q, docs, 1000.0, 1000);
        REQUIRE(ranked.docs.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(ranked.docs[i].doc_id == expected[i].doc_id);
            CHECK(std::abs(ranked.docs[i].score - expected[i].score) < 1e-12);
        }
    }
}

TEST_CASE("ties break by ascending doc id and depth cuts the list") {
    const std::vector<Document> docs = {{"zeta", {"a", "b"}}, {"alpha", {"a", "b"}}, {"mid", {"a", "c"}}};
    const auto idx = build_index(docs);
    const auto ranked = retrieve(QueryModel{"q", {{"a", 1.0}}}, idx, 10.0, 1000);
    REQUIRE(ranked.docs.size() == 3);
    CHECK(ranked.docs[0].doc_id == "alpha");
    CHECK(ranked.docs[1].doc_id == "mid");
    CHECK(ranked.docs[2].doc_id == "zeta");
    CHECK(retrieve(QueryModel{"q", {{"a", 1.0}}}, idx, 10.0, 2).docs.size() == 2);
}

TEST_CASE("zero-weight terms do not make documents reachable") {
    const std::vector<Document> docs = {{"d1", {"a"}}, {"d2", {"b"}}};
    const auto idx = build_index(docs);
    const auto ranked = retrieve(QueryModel{"q", {{"a", 1.0}, {"b", 0.0}}}, idx);
    REQUIRE(ranked.docs.size() == 1);
    CHECK(ranked.docs[0].doc_id == "d1");
}

TEST_CASE("score never decreases when a query term's frequency rises at fixed length") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto corpus = testing::random_corpus(1000 + trial, 20, 8);
        auto docs = corpus.docs;
        const auto& term = corpus.vocabulary[rng() % corpus.vocabulary.size()];
        auto& doc = docs[rng() % docs.size()];
        const auto other = std::find_if(doc.terms.begin(), doc.terms.end(), [&](const auto& t) { return t != term; });
        if (other == doc.terms.end()) continue;
        const QueryModel q{"q", {{term, 1.0}}};
        const auto before_idx = build_index(docs);
        // absent terms are skipped entirely, so there is no likelihood to compare against
        if (!before_idx.contains(term)) continue;
        const double before = qlm_score(q, doc.doc_id, before_idx, 100.0);
        *other = term;
        const auto after_idx = build_index(docs);
        CHECK(qlm_score(q, doc.doc_id, after_idx, 100.0) >= before);
    }
}

TEST_CASE("retrieve_all is independent of the worker count") {
    const auto corpus = testing::random_corpus(9, 120, 30);
    const auto idx = build_index(corpus.docs);
    std::vector<QueryModel> queries;
    for (std::size_t i = 0; i + 1 < corpus.vocabulary.size(); ++i) {
        queries.push_back({std::to_string(i), {{corpus.vocabulary[i], 1.0}, {corpus.vocabulary[i + 1], 0.5}}});
    }
    const auto serial = retrieve_all(queries, idx, 1000.0, 50, 1);
    const auto parallel = retrieve_all(queries, idx, 1000.0, 50, 4);
    CHECK(serial == parallel);
    for (std::size_t i = 0; i < queries.size(); ++i) CHECK(serial[i].query_id == queries[i].query_id);
}

TEST_CASE("run files round trip and malformed lines report their line number") {
    const std::vector<RankedList> runs = {
        {"301", {{"D1", -1.5}, {"D2", -2.25}}},
        {"302", {{"D9", -0.125}}},
    };
    std::stringstream out;
    write_run(out, runs, "tag");
    CHECK(out.str().starts_with("301 Q0 D1 1 -1.500000 tag\n"));
    std::stringstream in(out.str());
    CHECK(read_run(in) == runs);

    std::stringstream bad("301 Q0 D1 1 -1.0 tag\n301 Q0 D2 2 -2.0\n");
    try {
        read_run(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.where() == 2);
    }
    std::stringstream misranked("301 Q0 D1 2 -1.0 tag\n");
    CHECK_THROWS_AS(read_run(misranked), ParseError);
}
