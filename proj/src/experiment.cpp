#include "qexp/experiment.hpp"

#include <algorithm>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qexp/detail/random.hpp"
#include "qexp/parallel.hpp"

namespace qexp {

std::string_view to_string(Method method) {
    switch (method) {
        case Method::Qlm: return "qlm";
        case Method::Awe: return "awe";
        case Method::Eqe1: return "eqe1";
        case Method::Dec: return "dec";
    }
    return "?";
}

Method parse_method(std::string_view text) {
    for (auto m : kAllMethods) {
        if (to_string(m) == text) return m;
    }
    throw std::invalid_argument(fmt::format("unknown method '{}' (expected qlm, awe, eqe1 or dec)", text));
}

QueryModel build_query(Method method, const Topic& topic, const std::optional<CandidatePool>& pool,
                       const EmbeddingTable& table, const ExpansionConfig& config, const GoodnessFn& p_good) {
    if (method == Method::Qlm || !pool || pool->terms.empty()) {
        return normalized_query(topic.query_id, topic.title_terms);
    }
    switch (method) {
        case Method::Awe: return awe_expand(topic, *pool, config);
        case Method::Eqe1: return eqe1_expand(topic, table, *pool, config);
        case Method::Dec:
            if (!p_good) throw std::invalid_argument("DEC expansion needs a goodness estimator");
            return dec_expand(topic, *pool, p_good, config);
        case Method::Qlm: break;
    }
    return normalized_query(topic.query_id, topic.title_terms);
}

std::vector<QueryModel> build_queries(Method method, std::span<const Topic> topics, const InvertedIndex& idx,
                                      const EmbeddingTable& table, const StopwordSet& stopwords,
                                      const ExpansionConfig& config, const GoodnessFn& p_good) {
    std::vector<QueryModel> out;
    out.reserve(topics.size());
    for (const auto& topic : topics) {
        std::optional<CandidatePool> pool;
        if (method != Method::Qlm) {
            try {
                pool = build_candidate_pool(topic, table, idx, stopwords, config.pool_size);
            } catch (const std::invalid_argument& e) {
                spdlog::warn("query {}: no candidate pool ({}); using the title only", topic.query_id, e.what());
            }
        }
        out.push_back(build_query(method, topic, pool, table, config, p_good));
    }
    return out;
}

std::vector<std::vector<std::string>> partition_folds(std::vector<std::string> query_ids, std::size_t k,
                                                      std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("cross-validation needs k >= 2");
    if (query_ids.size() < k) {
        throw std::invalid_argument(fmt::format("{} queries cannot fill {} folds", query_ids.size(), k));
    }
    std::sort(query_ids.begin(), query_ids.end());
    std::mt19937_64 rng(seed);
    detail::shuffle(std::span(query_ids), rng);
    std::vector<std::vector<std::string>> folds(k);
    for (std::size_t i = 0; i < query_ids.size(); ++i) folds[i % k].push_back(query_ids[i]);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

Comparison ExperimentReport::comparison(Method treatment, Method baseline) const {
    return compare(results.at(baseline), results.at(treatment));
}

namespace {

struct QueryMetrics {
    double ap = 0.0;
    double p10 = 0.0;
};

}  // namespace

ExperimentReport cross_validate(const ExperimentInputs& inputs, std::span<const Method> methods,
                                const ExperimentConfig& config) {
    if (!inputs.index || !inputs.qrels || !inputs.embeddings || !inputs.stopwords) {
        throw std::invalid_argument("experiment inputs are incomplete");
    }
    config.expansion.validate();
    const bool wants_dec = std::find(methods.begin(), methods.end(), Method::Dec) != methods.end();
    if (wants_dec && !inputs.dataset) throw std::invalid_argument("DEC needs a labeled dataset");

    std::vector<const Topic*> evaluable;
    for (const auto& t : inputs.topics) {
        if (inputs.qrels->num_relevant(t.query_id) > 0) {
            evaluable.push_back(&t);
        } else {
            spdlog::warn("query {} has no relevant documents; not evaluated", t.query_id);
        }
    }
    std::vector<std::string> ids;
    for (const auto* t : evaluable) ids.push_back(t->query_id);

    ExperimentReport report;
    report.methods.assign(methods.begin(), methods.end());
    report.folds = partition_folds(ids, config.folds, config.seed);

    std::map<std::string, std::optional<CandidatePool>> pools;
    for (const auto* t : evaluable) {
        try {
            pools[t->query_id] = build_candidate_pool(*t, *inputs.embeddings, *inputs.index, *inputs.stopwords,
                                                      config.expansion.pool_size);
        } catch (const std::exception& e) {
            spdlog::warn("query {}: no candidate pool ({}); expansion methods use the title only", t->query_id,
                         e.what());
            pools[t->query_id] = std::nullopt;
        }
    }
    std::map<std::string, const Topic*> topic_of;
    for (const auto* t : evaluable) topic_of[t->query_id] = t;

    // fold -> method -> query -> metrics
    using FoldMetrics = std::map<Method, std::map<std::string, QueryMetrics>>;
    std::vector<FoldMetrics> fold_metrics(report.folds.size());

    parallel_for(report.folds.size(), config.workers, [&](std::size_t f) {
        const auto& test_ids = report.folds[f];
        std::unique_ptr<dec::SiameseModel> model;
        std::unique_ptr<dec::GoodnessEstimator> estimator;
        if (wants_dec) {
            std::vector<std::string> train_ids;
            for (std::size_t g = 0; g < report.folds.size(); ++g) {
                if (g != f) train_ids.insert(train_ids.end(), report.folds[g].begin(), report.folds[g].end());
            }
            const auto train_set = inputs.dataset->subset(train_ids);
            if (train_set.examples.empty()) {
                throw std::runtime_error(fmt::format("fold {} has no labeled training queries", f + 1));
            }
            const std::uint64_t fold_seed = config.seed + 1000003ULL * (f + 1);
            const dec::ModelShape shape{inputs.embeddings->dim(), config.hidden, config.representation};
            model = std::make_unique<dec::SiameseModel>(shape, inputs.embeddings, fold_seed, config.model_options);
            auto training = config.training;
            training.seed = fold_seed + 1;
            dec::train(train_set, training, *model);
            dec::ReferenceSet refset;
            try {
                refset = dec::build_reference_set(train_set, *inputs.embeddings, config.reference_size, fold_seed + 2);
            } catch (const std::invalid_argument& e) {
                throw std::runtime_error(fmt::format("fold {}: {}", f + 1, e.what()));
            }
            estimator = std::make_unique<dec::GoodnessEstimator>(*model, std::move(refset));
        }
        GoodnessFn goodness;
        if (estimator) {
            goodness = [&](std::span<const std::string> q, const std::string& x) { return estimator->p_good(q, x); };
        }
        for (auto method : methods) {
            for (const auto& qid : test_ids) {
                const auto& topic = *topic_of.at(qid);
                const auto q = build_query(method, topic, pools.at(qid), *inputs.embeddings, config.expansion, goodness);
                const auto ranked = retrieve(q, *inputs.index, config.retrieval.mu, config.retrieval.depth);
                fold_metrics[f][method][qid] = {average_precision(ranked, *inputs.qrels, config.retrieval.depth),
                                                precision_at(ranked, *inputs.qrels, 10)};
            }
        }
    });

    for (auto method : methods) {
        PerQuery ap;
        PerQuery p10;
        for (const auto& fm : fold_metrics) {
            for (const auto& [qid, m] : fm.at(method)) {
                ap[qid] = m.ap;
                p10[qid] = m.p10;
            }
        }
        report.results[method] = summarize(std::move(ap), std::move(p10), config.retrieval.depth);
    }
    return report;
}

namespace {

std::string significance_marks(const ExperimentReport& report, Method method) {
    std::string marks;
    const std::pair<Method, char> baselines[] = {{Method::Qlm, '1'}, {Method::Awe, '2'}, {Method::Eqe1, '3'}};
    for (const auto& [baseline, mark] : baselines) {
        if (baseline == method || !report.results.contains(baseline)) continue;
        if (report.comparison(method, baseline).significant()) marks.push_back(mark);
    }
    return marks;
}

std::string method_label(Method m) {
    std::string s(to_string(m));
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

}  // namespace

std::string format_report(const ExperimentReport& report) {
    std::string out = fmt::format("{:<8} {:>12} {:>8} {:>7}\n", "method", "MAP", "P@10", "RI");
    const bool has_qlm = report.results.contains(Method::Qlm);
    for (auto m : report.methods) {
        const auto& r = report.results.at(m);
        const auto marks = significance_marks(report, m);
        const std::string map = marks.empty() ? fmt::format("{:.4f}", r.map) : fmt::format("{:.4f}^{}", r.map, marks);
        const std::string ri =
            (has_qlm && m != Method::Qlm) ? fmt::format("{:.2f}", report.comparison(m, Method::Qlm).ri) : "-";
        out += fmt::format("{:<8} {:>12} {:>8.4f} {:>7}\n", method_label(m), map, r.mean_p10, ri);
    }
    out += fmt::format("queries: {}, folds: {}\n", report.results.empty() ? 0 : report.results.begin()->second.ap.size(),
                       report.folds.size());
    return out;
}

void write_report_tsv(std::ostream& out, const ExperimentReport& report) {
    out << "method\tMAP\tP@10\tRI\tsignificant_over\n";
    const bool has_qlm = report.results.contains(Method::Qlm);
    for (auto m : report.methods) {
        const auto& r = report.results.at(m);
        const std::string ri =
            (has_qlm && m != Method::Qlm) ? fmt::format("{:.4f}", report.comparison(m, Method::Qlm).ri) : "-";
        out << fmt::format("{}\t{:.4f}\t{:.4f}\t{}\t{}\n", to_string(m), r.map, r.mean_p10, ri,
                           significance_marks(report, m));
    }
}

void write_per_query_csv(std::ostream& out, const ExperimentReport& report) {
    out << "query_id,method,ap,p10\n";
    for (auto m : report.methods) {
        const auto& r = report.results.at(m);
        for (const auto& [qid, ap] : r.ap) out << fmt::format("{},{},{},{}\n", qid, to_string(m), ap, r.p10.at(qid));
    }
}

}  // namespace qexp
