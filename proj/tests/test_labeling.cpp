#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qexp/labeling.hpp"
#include "support/synthetic.hpp"

using namespace qexp;

namespace {

testing::MismatchParams small_mismatch() {
    testing::MismatchParams p;
    p.topics = 6;
    p.background_docs = 20;
    p.filler_vocabulary = 60;
    return p;
}

}  // namespace

TEST_CASE("label thresholds") {
    CHECK(label_for_delta(0.001, 0.0005) == Label::Good);
    CHECK(label_for_delta(-0.001, 0.0005) == Label::Bad);
    CHECK(label_for_delta(0.0005, 0.0005) == Label::Neutral);
    CHECK(label_for_delta(-0.0005, 0.0005) == Label::Neutral);
    CHECK(label_for_delta(1e-12, 0.0) == Label::Good);
    CHECK(label_for_delta(0.0, 0.0) == Label::Neutral);
    for (const auto l : {Label::Good, Label::Neutral, Label::Bad}) CHECK(parse_label(to_string(l)) == l);
    CHECK_THROWS(parse_label("great"));
}

TEST_CASE("planted good, bad and neutral terms") {
    const auto f = testing::labeling_fixture();
    // title ranking d1 d3 d2 d4; relevant d1, d2
    const double base = baseline_ap(f.topic, f.index, f.qrels);
    CHECK(base == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));

    const auto [pie, pie_delta] = label_term(f.topic, "pie", f.index, f.qrels, base, 0.0005);
    CHECK(pie == Label::Good);
    CHECK(pie_delta == doctest::Approx(1.0 - base));

    const auto [truck, truck_delta] = label_term(f.topic, "truck", f.index, f.qrels, base, 0.0005);
    CHECK(truck == Label::Bad);
    CHECK(truck_delta == doctest::Approx((1.0 / 3.0 + 2.0 / 4.0) / 2.0 - base));

    // "common" has the same postings as "apple" up to tf, and appears once everywhere
    const auto [common, common_delta] = label_term(f.topic, "common", f.index, f.qrels, base, 0.0005);
    CHECK(common == Label::Neutral);
    CHECK(common_delta == 0.0);

    const auto [absent, absent_delta] = label_term(f.topic, "zzz", f.index, f.qrels, base, 0.0005);
    CHECK(absent == Label::Neutral);
    CHECK(absent_delta == 0.0);
}

TEST_CASE("candidate pool excludes query terms, stopwords and unindexed terms") {
    const std::vector<Document> docs = {{"d1", {"apple", "pear", "plum", "the", "apples"}}};
    const auto idx = build_index(docs);
    EmbeddingTable table(2);
    table.add("apple", std::vector<double>{1, 0});
    table.add("apples", std::vector<double>{1, 0.01});
    table.add("the", std::vector<double>{1, 0.02});
    table.add("orchard", std::vector<double>{1, 0.03});  // not in the index
    table.add("pear", std::vector<double>{1, 0.5});
    table.add("plum", std::vector<double>{0.2, 1});
    const Topic topic{"1", {"apple"}};
    const StopwordSet stops = {"the"};

    const auto pool = candidate_pool(topic, table, idx, stops, 10);
    CHECK(pool == std::vector<std::string>{"apples", "pear", "plum"});
    CHECK(candidate_pool(topic, table, idx, stops, 2).size() == 2);

    const auto full = build_candidate_pool(topic, table, idx, stops, 10);
    CHECK(full.centroid == Vector{1, 0});
    for (const auto& n : full.terms) CHECK(n.similarity == doctest::Approx(cosine(full.centroid, table.find(n.term))));
}

TEST_CASE("candidate pool agrees with an exhaustive filtered sort") {
    const auto mc = testing::mismatch_collection(3, small_mismatch());
    const auto idx = build_index(mc.docs);
    for (const auto& topic : mc.topics) {
        const auto c = centroid(topic.title_terms, *mc.embeddings);
        std::vector<Neighbor> all;
        for (const auto& t : mc.embeddings->terms()) {
            if (!idx.contains(t) || std::find(topic.title_terms.begin(), topic.title_terms.end(), t) != topic.title_terms.end()) continue;
            all.push_back({t, cosine(c, mc.embeddings->find(t))});
        }
        std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
            return a.similarity != b.similarity ? a.similarity > b.similarity : a.term < b.term;
        });
        all.resize(25);
        CHECK(build_candidate_pool(topic, *mc.embeddings, idx, {}, 25).terms == all);
    }
}

TEST_CASE("build_dataset is deterministic and every label is consistent with its delta") {
    const auto mc = testing::mismatch_collection(5, small_mismatch());
    const auto idx = build_index(mc.docs);
    LabelingConfig cfg;
    cfg.pool_size = 15;
    cfg.collection = "mm";
    const auto ds = build_dataset(mc.topics, idx, mc.qrels, *mc.embeddings, {}, cfg);
    CHECK(ds.examples.size() <= mc.topics.size() * cfg.pool_size);
    CHECK_NOTHROW(ds.validate());

    cfg.workers = 3;
    const auto again = build_dataset(mc.topics, idx, mc.qrels, *mc.embeddings, {}, cfg);
    std::stringstream a, b;
    write_dataset(a, ds);
    write_dataset(b, again);
    CHECK(a.str() == b.str());

    // re-label a sample of examples independently
    for (std::size_t i = 0; i < ds.examples.size(); i += 7) {
        const auto& ex = ds.examples[i];
        const auto topic = std::find_if(mc.topics.begin(), mc.topics.end(),
                                        [&](const Topic& t) { return t.query_id == ex.query_id; });
        const double base = baseline_ap(*topic, idx, mc.qrels);
        const auto [label, delta] = label_term(*topic, ex.candidate, idx, mc.qrels, base, cfg.eps);
        CHECK(label == ex.label);
        CHECK(delta == ex.ap_delta);
    }

    const auto stats = label_statistics(ds);
    CHECK(stats.total() == ds.examples.size());
    CHECK(stats.good == static_cast<std::size_t>(std::count_if(ds.examples.begin(), ds.examples.end(),
                                                               [](const auto& e) { return e.label == Label::Good; })));
    CHECK(stats.percent(Label::Good) + stats.percent(Label::Neutral) + stats.percent(Label::Bad) ==
          doctest::Approx(100.0));

    const auto oracle = oracle_run(ds, mc.topics, idx, mc.qrels);
    CHECK(oracle.oracle_map >= oracle.baseline_map);
    const auto report = format_label_report(stats, oracle, "mm");
    CHECK(report.find("mm") != std::string::npos);
}

TEST_CASE("oracle run leaves queries without good terms at their baseline") {
    const auto f = testing::labeling_fixture();
    LabeledDataset ds;
    ds.examples.push_back({"7", {"apple"}, "truck", Label::Bad, -0.4166666666666667});
    ds.examples.push_back({"7", {"apple"}, "common", Label::Neutral, 0.0});
    const std::vector<Topic> topics = {f.topic};
    const auto oracle = oracle_run(ds, topics, f.index, f.qrels);
    CHECK(oracle.oracle_ap.at("7") == oracle.baseline_ap.at("7"));

    ds.examples.push_back({"7", {"apple"}, "pie", Label::Good, 1.0 / 6.0});
    CHECK(oracle_run(ds, topics, f.index, f.qrels).oracle_ap.at("7") == doctest::Approx(1.0));
}

TEST_CASE("dataset validation and round trip") {
    LabeledDataset ds;
    ds.metadata.collection = "fixture";
    ds.metadata.eps = 0.001;
    ds.examples.push_back({"1", {"alpha", "beta"}, "gamma", Label::Good, 0.0123456789012345});
    ds.examples.push_back({"1", {"alpha", "beta"}, "delta", Label::Neutral, -0.0004});
    ds.examples.push_back({"2", {"epsilon"}, "zeta", Label::Bad, -0.25});
    CHECK_NOTHROW(ds.validate());

    std::stringstream out;
    write_dataset(out, ds);
    std::stringstream in(out.str());
    const auto back = read_dataset(in);
    REQUIRE(back.examples.size() == 3);
    CHECK(back.metadata.collection == "fixture");
    CHECK(back.metadata.eps == 0.001);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.examples[i].query_id == ds.examples[i].query_id);
        CHECK(back.examples[i].query_terms == ds.examples[i].query_terms);
        CHECK(back.examples[i].candidate == ds.examples[i].candidate);
        CHECK(back.examples[i].label == ds.examples[i].label);
        CHECK(back.examples[i].ap_delta == ds.examples[i].ap_delta);
    }
    CHECK(ds.subset({"2"}).examples.size() == 1);

    auto inconsistent = ds;
    inconsistent.examples[2].label = Label::Good;
    CHECK_THROWS(inconsistent.validate());
    auto duplicate = ds;
    duplicate.examples.push_back(ds.examples[0]);
    CHECK_THROWS(duplicate.validate());

    std::stringstream headless("query_id\tterm\tlabel\tap_delta\n");
    CHECK_THROWS_AS(read_dataset(headless), ParseError);
}
