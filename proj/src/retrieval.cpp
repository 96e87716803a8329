#include "qexp/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "qexp/parallel.hpp"

namespace qexp {

void QueryModel::validate() const {
    bool any_positive = false;
    for (const auto& [term, w] : weights) {
        if (!std::isfinite(w) || w < 0.0) {
            throw std::invalid_argument(
                fmt::format("query {}: weight of '{}' must be finite and non-negative", query_id, term));
        }
        any_positive = any_positive || w > 0.0;
    }
    if (!any_positive) {
        throw std::invalid_argument(fmt::format("query {} has no positively weighted term", query_id));
    }
}

double QueryModel::total_weight() const {
    double total = 0.0;
    for (const auto& [_, w] : weights) total += w;
    return total;
}

QueryModel query_from_terms(const std::string& query_id, std::span<const std::string> terms) {
    QueryModel q{query_id, {}};
    for (const auto& t : terms) q.weights[t] += 1.0;
    return q;
}

QueryModel normalized_query(const std::string& query_id, std::span<const std::string> terms) {
    auto q = query_from_terms(query_id, terms);
    const double n = static_cast<double>(terms.size());
    for (auto& [_, w] : q.weights) w /= n;
    return q;
}

double qlm_score(const QueryModel& q, std::uint32_t doc, const InvertedIndex& idx, double mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
    if (doc >= idx.num_docs()) throw std::out_of_range(fmt::format("unknown doc index {}", doc));
    const double total = static_cast<double>(idx.total_tokens());
    const double denom = static_cast<double>(idx.doc_length(doc)) + mu;
    double score = 0.0;
    for (const auto& [term, weight] : q.weights) {
        const auto cf = idx.collection_freq(term);
        if (cf == 0) continue;
        const double p_c = static_cast<double>(cf) / total;
        const double tf = idx.term_frequency(term, doc);
        score += weight * std::log((tf + mu * p_c) / denom);
    }
    return score;
}

double qlm_score(const QueryModel& q, const std::string& doc_id, const InvertedIndex& idx, double mu) {
    return qlm_score(q, idx.doc_index(doc_id), idx, mu);
}

RankedList retrieve(const QueryModel& q, const InvertedIndex& idx, double mu, std::size_t depth) {
    if (q.weights.empty()) throw std::invalid_argument(fmt::format("query {} is empty", q.query_id));
    q.validate();
    if (depth < 1) throw std::invalid_argument("depth must be >= 1");
    if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");

    std::vector<std::uint32_t> candidates;
    for (const auto& [term, weight] : q.weights) {
        if (weight <= 0.0) continue;
        for (const auto& p : idx.postings(term)) candidates.push_back(p.doc);
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    RankedList ranked{q.query_id, {}};
    ranked.docs.reserve(candidates.size());
    for (auto doc : candidates) ranked.docs.push_back({idx.doc_id(doc), qlm_score(q, doc, idx, mu)});

    auto order = [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    };
    if (ranked.docs.size() > depth) {
        std::partial_sort(ranked.docs.begin(), ranked.docs.begin() + static_cast<std::ptrdiff_t>(depth),
                          ranked.docs.end(), order);
        ranked.docs.resize(depth);
    } else {
        std::sort(ranked.docs.begin(), ranked.docs.end(), order);
    }
    return ranked;
}

std::vector<RankedList> retrieve_all(std::span<const QueryModel> queries, const InvertedIndex& idx,
                                     double mu, std::size_t depth, unsigned workers) {
    std::vector<RankedList> out(queries.size());
    parallel_for(queries.size(), workers,
                 [&](std::size_t i) { out[i] = retrieve(queries[i], idx, mu, depth); });
    return out;
}

void write_run(std::ostream& out, std::span<const RankedList> runs, const std::string& tag) {
    for (const auto& list : runs) {
        for (std::size_t i = 0; i < list.docs.size(); ++i) {
            out << fmt::format("{} Q0 {} {} {:.6f} {}\n", list.query_id, list.docs[i].doc_id, i + 1,
                               list.docs[i].score, tag);
        }
    }
}

void write_run(const std::filesystem::path& path, std::span<const RankedList> runs, const std::string& tag) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write run file '{}'", path.string()));
    write_run(out, runs, tag);
}

std::vector<RankedList> read_run(std::istream& in) {
    std::vector<RankedList> runs;
    std::map<std::string, std::size_t> slot;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::vector<std::string> cols;
        for (std::string f; fields >> f;) cols.push_back(f);
        if (cols.empty()) continue;
        if (cols.size() != 6) {
            throw ParseError(fmt::format("run line {}: expected 6 columns, got {}", line_no, cols.size()),
                             line_no);
        }
        std::size_t rank = 0;
        double score = 0.0;
        try {
            std::size_t used = 0;
            rank = std::stoul(cols[3], &used);
            if (used != cols[3].size()) throw std::invalid_argument("rank");
            score = std::stod(cols[4], &used);
            if (used != cols[4].size()) throw std::invalid_argument("score");
        } catch (const std::exception&) {
            throw ParseError(fmt::format("run line {}: bad rank or score", line_no), line_no);
        }
        auto [it, inserted] = slot.try_emplace(cols[0], runs.size());
        if (inserted) runs.push_back({cols[0], {}});
        auto& list = runs[it->second];
        if (rank != list.docs.size() + 1) {
            throw ParseError(fmt::format("run line {}: rank {} disagrees with position {}", line_no, rank,
                                         list.docs.size() + 1),
                             line_no);
        }
        list.docs.push_back({cols[2], score});
    }
    return runs;
}

std::vector<RankedList> read_run(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open run file '{}'", path.string()));
    return read_run(in);
}

}  // namespace qexp
