#include "qexp/labeling.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <json.hpp>

#include "qexp/parallel.hpp"

namespace qexp {

std::string_view to_string(Label label) {
    switch (label) {
        case Label::Good: return "good";
        case Label::Neutral: return "neutral";
        case Label::Bad: return "bad";
    }
    return "?";
}

Label parse_label(std::string_view text) {
    if (text == "good") return Label::Good;
    if (text == "neutral") return Label::Neutral;
    if (text == "bad") return Label::Bad;
    throw std::invalid_argument(fmt::format("unknown label '{}'", text));
}

Label label_for_delta(double ap_delta, double eps) {
    if (ap_delta > eps) return Label::Good;
    if (ap_delta < -eps) return Label::Bad;
    return Label::Neutral;
}

void LabeledDataset::validate() const {
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& ex : examples) {
        if (!seen.emplace(ex.query_id, ex.candidate).second) {
            throw std::invalid_argument(
                fmt::format("duplicate example for query {} term '{}'", ex.query_id, ex.candidate));
        }
        if (label_for_delta(ex.ap_delta, metadata.eps) != ex.label) {
            throw std::invalid_argument(fmt::format("query {} term '{}': label {} inconsistent with delta {}",
                                                    ex.query_id, ex.candidate, to_string(ex.label), ex.ap_delta));
        }
    }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::string>& query_ids) const {
    const std::set<std::string> keep(query_ids.begin(), query_ids.end());
    LabeledDataset out{{}, metadata};
    for (const auto& ex : examples) {
        if (keep.contains(ex.query_id)) out.examples.push_back(ex);
    }
    return out;
}

CandidatePool build_candidate_pool(const Topic& topic, const EmbeddingTable& table, const InvertedIndex& idx,
                                   const StopwordSet& stopwords, std::size_t pool_size) {
    CandidatePool pool;
    pool.centroid = centroid(topic.title_terms, table);
    const std::unordered_set<std::string> exclude(topic.title_terms.begin(), topic.title_terms.end());
    pool.terms = top_k_neighbors(pool.centroid, pool_size, table, exclude, [&](const std::string& term) {
        return !stopwords.contains(term) && idx.contains(term);
    });
    return pool;
}

std::vector<std::string> candidate_pool(const Topic& topic, const EmbeddingTable& table,
                                        const InvertedIndex& idx, const StopwordSet& stopwords,
                                        std::size_t pool_size) {
    std::vector<std::string> terms;
    for (auto& n : build_candidate_pool(topic, table, idx, stopwords, pool_size).terms) {
        terms.push_back(std::move(n.term));
    }
    return terms;
}

double baseline_ap(const Topic& topic, const InvertedIndex& idx, const Qrels& qrels,
                   const RetrievalSettings& settings) {
    const auto q = query_from_terms(topic.query_id, topic.title_terms);
    return average_precision(retrieve(q, idx, settings.mu, settings.depth), qrels, settings.depth);
}

std::pair<Label, double> label_term(const Topic& topic, const std::string& candidate, const InvertedIndex& idx,
                                    const Qrels& qrels, double baseline, double eps,
                                    const RetrievalSettings& settings) {
    auto q = query_from_terms(topic.query_id, topic.title_terms);
    q.weights[candidate] += 1.0;
    const double ap = average_precision(retrieve(q, idx, settings.mu, settings.depth), qrels, settings.depth);
    const double delta = ap - baseline;
    return {label_for_delta(delta, eps), delta};
}

LabeledDataset build_dataset(std::span<const Topic> topics, const InvertedIndex& idx, const Qrels& qrels,
                             const EmbeddingTable& table, const StopwordSet& stopwords,
                             const LabelingConfig& config) {
    struct Job {
        std::size_t topic;
        std::string candidate;
    };
    std::vector<Job> jobs;
    std::vector<double> baselines(topics.size(), 0.0);
    for (std::size_t t = 0; t < topics.size(); ++t) {
        const auto& topic = topics[t];
        if (qrels.num_relevant(topic.query_id) == 0) {
            spdlog::warn("query {} has no relevant documents; not labeled", topic.query_id);
            continue;
        }
        std::vector<std::string> pool;
        try {
            pool = candidate_pool(topic, table, idx, stopwords, config.pool_size);
        } catch (const std::exception& e) {
            spdlog::warn("query {}: no candidate pool ({}); not labeled", topic.query_id, e.what());
            continue;
        }
        baselines[t] = baseline_ap(topic, idx, qrels, config.retrieval);
        for (auto& c : pool) jobs.push_back({t, std::move(c)});
    }

    std::vector<LabeledExample> examples(jobs.size());
    parallel_for(jobs.size(), config.workers, [&](std::size_t i) {
        const auto& topic = topics[jobs[i].topic];
        const auto [label, delta] = label_term(topic, jobs[i].candidate, idx, qrels, baselines[jobs[i].topic],
                                               config.eps, config.retrieval);
        examples[i] = {topic.query_id, topic.title_terms, jobs[i].candidate, label, delta};
    });

    LabeledDataset dataset;
    dataset.examples = std::move(examples);
    dataset.metadata = {config.collection, config.eps, config.retrieval.mu, config.pool_size,
                        config.retrieval.depth};
    return dataset;
}

OracleResult oracle_run(const LabeledDataset& dataset, std::span<const Topic> topics, const InvertedIndex& idx,
                        const Qrels& qrels, const RetrievalSettings& settings) {
    std::map<std::string, std::vector<std::string>> good_terms;
    std::set<std::string> labeled;
    for (const auto& ex : dataset.examples) {
        labeled.insert(ex.query_id);
        if (ex.label == Label::Good) good_terms[ex.query_id].push_back(ex.candidate);
    }
    OracleResult result;
    for (const auto& topic : topics) {
        if (!labeled.contains(topic.query_id)) continue;
        auto q = query_from_terms(topic.query_id, topic.title_terms);
        const double base =
            average_precision(retrieve(q, idx, settings.mu, settings.depth), qrels, settings.depth);
        result.baseline_ap[topic.query_id] = base;
        const auto it = good_terms.find(topic.query_id);
        if (it == good_terms.end()) {
            result.oracle_ap[topic.query_id] = base;
            continue;
        }
        for (const auto& term : it->second) q.weights[term] += 1.0;
        result.oracle_ap[topic.query_id] =
            average_precision(retrieve(q, idx, settings.mu, settings.depth), qrels, settings.depth);
    }
    const auto mean = [](const PerQuery& m) {
        double s = 0.0;
        for (const auto& [_, v] : m) s += v;
        return m.empty() ? 0.0 : s / static_cast<double>(m.size());
    };
    result.baseline_map = mean(result.baseline_ap);
    result.oracle_map = mean(result.oracle_ap);
    return result;
}

double LabelStatistics::percent(Label l) const {
    if (total() == 0) return 0.0;
    const auto n = l == Label::Good ? good : l == Label::Bad ? bad : neutral;
    return 100.0 * static_cast<double>(n) / static_cast<double>(total());
}

LabelStatistics label_statistics(const LabeledDataset& dataset) {
    LabelStatistics s;
    for (const auto& ex : dataset.examples) {
        switch (ex.label) {
            case Label::Good: ++s.good; break;
            case Label::Neutral: ++s.neutral; break;
            case Label::Bad: ++s.bad; break;
        }
    }
    return s;
}

std::string format_label_report(const LabelStatistics& stats, const OracleResult& oracle,
                                 const std::string& collection) {
    std::string out;
    out += fmt::format("{:<12} {:>9} {:>12} {:>8} {:>13} {:>10}\n", "collection", "Good (%)", "Neutral (%)",
                       "Bad (%)", "Oracle (MAP)", "QLM (MAP)");
    out += fmt::format("{:<12} {:>9.1f} {:>12.1f} {:>8.1f} {:>13.4f} {:>10.4f}\n",
                       collection.empty() ? "-" : collection, stats.percent(Label::Good),
                       stats.percent(Label::Neutral), stats.percent(Label::Bad), oracle.oracle_map,
                       oracle.baseline_map);
    out += fmt::format("examples: {} (good {}, neutral {}, bad {}); queries: {}\n", stats.total(), stats.good,
                       stats.neutral, stats.bad, oracle.baseline_ap.size());
    return out;
}

void write_dataset(std::ostream& out, const LabeledDataset& dataset) {
    nlohmann::ordered_json meta;
    meta["format"] = "qexp-dataset";
    meta["version"] = 1;
    meta["collection"] = dataset.metadata.collection;
    meta["eps"] = dataset.metadata.eps;
    meta["mu"] = dataset.metadata.mu;
    meta["pool_size"] = dataset.metadata.pool_size;
    meta["depth"] = dataset.metadata.depth;
    nlohmann::ordered_json queries = nlohmann::ordered_json::object();
    for (const auto& ex : dataset.examples) {
        if (!queries.contains(ex.query_id)) queries[ex.query_id] = ex.query_terms;
    }
    meta["queries"] = std::move(queries);
    out << "# " << meta.dump() << '\n';
    out << "query_id\tterm\tlabel\tap_delta\n";
    for (const auto& ex : dataset.examples) {
        out << fmt::format("{}\t{}\t{}\t{}\n", ex.query_id, ex.candidate, to_string(ex.label), ex.ap_delta);
    }
}

void write_dataset(const std::filesystem::path& path, const LabeledDataset& dataset) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write dataset '{}'", path.string()));
    write_dataset(out, dataset);
}

LabeledDataset read_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
        throw ParseError("dataset line 1: missing metadata header", 1);
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(line.substr(2));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("dataset line 1: {}", e.what()), 1);
    }
    LabeledDataset dataset;
    std::map<std::string, Tokens> queries;
    try {
        dataset.metadata.collection = meta.at("collection").get<std::string>();
        dataset.metadata.eps = meta.at("eps").get<double>();
        dataset.metadata.mu = meta.at("mu").get<double>();
        dataset.metadata.pool_size = meta.at("pool_size").get<std::size_t>();
        dataset.metadata.depth = meta.at("depth").get<std::size_t>();
        queries = meta.at("queries").get<std::map<std::string, Tokens>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("dataset line 1: {}", e.what()), 1);
    }

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 2 && line.rfind("query_id\t", 0) == 0) continue;
        std::vector<std::string> cols;
        std::istringstream fields(line);
        for (std::string f; std::getline(fields, f, '\t');) cols.push_back(f);
        if (cols.size() != 4) {
            throw ParseError(fmt::format("dataset line {}: expected 4 columns, got {}", line_no, cols.size()),
                             line_no);
        }
        LabeledExample ex;
        ex.query_id = cols[0];
        ex.candidate = cols[1];
        try {
            ex.label = parse_label(cols[2]);
            std::size_t used = 0;
            ex.ap_delta = std::stod(cols[3], &used);
            if (used != cols[3].size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception& e) {
            throw ParseError(fmt::format("dataset line {}: {}", line_no, e.what()), line_no);
        }
        const auto q = queries.find(ex.query_id);
        if (q == queries.end()) {
            throw ParseError(fmt::format("dataset line {}: query {} missing from metadata", line_no, ex.query_id),
                             line_no);
        }
        ex.query_terms = q->second;
        dataset.examples.push_back(std::move(ex));
    }
    dataset.validate();
    return dataset;
}

LabeledDataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open dataset '{}'", path.string()));
    return read_dataset(in);
}

}  // namespace qexp
