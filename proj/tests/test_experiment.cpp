#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "qexp/experiment.hpp"
#include "support/synthetic.hpp"

using namespace qexp;

namespace {

std::vector<std::string> ids(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(fmt::format("{}", 300 + i));
    return out;
}

}  // namespace

TEST_CASE("fold partition covers every query exactly once") {
    for (const std::size_t n : {5u, 6u, 17u, 50u}) {
        for (const std::size_t k : {2u, 3u, 5u}) {
            const auto folds = partition_folds(ids(n), k, 7);
            CHECK(folds.size() == k);
            std::multiset<std::string> seen;
            std::size_t smallest = n, largest = 0;
            for (const auto& f : folds) {
                seen.insert(f.begin(), f.end());
                smallest = std::min(smallest, f.size());
                largest = std::max(largest, f.size());
            }
            CHECK(seen.size() == n);
            CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == n);
            CHECK(largest - smallest <= 1);
        }
    }
}

TEST_CASE("fold partition is deterministic per seed and ignores input order") {
    auto shuffled = ids(20);
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(partition_folds(ids(20), 4, 3) == partition_folds(shuffled, 4, 3));
    CHECK(partition_folds(ids(20), 4, 3) != partition_folds(ids(20), 4, 4));
    CHECK_THROWS(partition_folds(ids(3), 4, 1));
    CHECK_THROWS(partition_folds(ids(3), 1, 1));
}

TEST_CASE("method names") {
    for (const auto m : kAllMethods) CHECK(parse_method(to_string(m)) == m);
    CHECK_THROWS(parse_method("bm25"));
}

TEST_CASE("unlearned methods give the same pooled metrics for every k") {
    testing::MismatchParams params;
    params.topics = 8;
    params.background_docs = 20;
    params.filler_vocabulary = 60;
    const auto mc = testing::mismatch_collection(21, params);
    const auto idx = build_index(mc.docs);
    const StopwordSet stops;
    ExperimentInputs inputs;
    inputs.topics = mc.topics;
    inputs.index = &idx;
    inputs.qrels = &mc.qrels;
    inputs.embeddings = mc.embeddings;
    inputs.stopwords = &stops;
    const Method methods[] = {Method::Qlm, Method::Awe, Method::Eqe1};

    ExperimentConfig cfg;
    cfg.expansion.pool_size = 20;
    std::vector<ExperimentReport> reports;
    for (const std::size_t k : {2u, 4u, 8u}) {
        cfg.folds = k;
        reports.push_back(cross_validate(inputs, methods, cfg));
    }
    for (const auto m : methods) {
        CHECK(reports[0].results.at(m).ap == reports[1].results.at(m).ap);
        CHECK(reports[0].results.at(m).ap == reports[2].results.at(m).ap);
        CHECK(reports[0].results.at(m).ap.size() == 8);
    }
    // expansion recovers synonym-only relevant documents here
    CHECK(reports[0].results.at(Method::Awe).map > reports[0].results.at(Method::Qlm).map);

    const auto text = format_report(reports[0]);
    CHECK(text.find("AWE") != std::string::npos);
    std::stringstream tsv, csv;
    write_report_tsv(tsv, reports[0]);
    write_per_query_csv(csv, reports[0]);
    CHECK(tsv.str().starts_with("method\tMAP\tP@10\tRI"));
    const auto rows = csv.str();
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 1 + 3 * 8);
}

TEST_CASE("five-fold run with DEC on the mini collection") {
    const auto root = std::filesystem::path(QEXP_SOURCE_DIR) / "data" / "mini";
    const auto& stops = inquery_stopwords();
    const auto docs = ingest_trec_docs(root / "docs", stops);
    const auto idx = build_index(docs);
    const auto topics = load_topics(root / "topics.txt", stops);
    const auto qrels = load_qrels(root / "qrels.txt");
    const auto table = std::make_shared<const EmbeddingTable>(load_embeddings(root / "vectors.txt"));

    LabelingConfig lcfg;
    lcfg.pool_size = 30;
    const auto dataset = build_dataset(topics, idx, qrels, *table, stops, lcfg);
    REQUIRE(dataset.examples.size() == 6 * 30);
    const auto stats = label_statistics(dataset);
    CHECK(stats.good < stats.neutral);

    ExperimentInputs inputs;
    inputs.topics = topics;
    inputs.index = &idx;
    inputs.qrels = &qrels;
    inputs.embeddings = table;
    inputs.stopwords = &stops;
    inputs.dataset = &dataset;
    ExperimentConfig cfg;
    cfg.expansion.pool_size = 30;
    cfg.hidden = 4;
    cfg.representation = 4;
    cfg.training.epochs = 1;
    cfg.training.pairs_per_epoch = 64;
    cfg.reference_size = 4;
    cfg.folds = 5;
    const auto report = cross_validate(inputs, kAllMethods, cfg);
    CHECK(report.folds.size() == 5);
    for (const auto m : kAllMethods) {
        CHECK(report.results.at(m).ap.size() == 6);
        CHECK(report.results.at(m).map >= 0.0);
        CHECK(report.results.at(m).map <= 1.0);
    }
}
