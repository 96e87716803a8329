#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qexp/collection.hpp"

namespace qexp {

inline constexpr double kDefaultMu = 1000.0;
inline constexpr std::size_t kDefaultDepth = 1000;

/// Weighted term distribution driving retrieval. Weights are non-negative
/// and need not sum to one. Ordered by term so scoring is reproducible.
struct QueryModel {
    std::string query_id;
    std::map<std::string, double> weights;

    /// Throws std::invalid_argument unless all weights are finite and >= 0
    /// with at least one positive.
    void validate() const;
    double total_weight() const;
};

/// Query model with weight 1 per title token (repeats accumulate).
QueryModel query_from_terms(const std::string& query_id, std::span<const std::string> terms);
/// Same as query_from_terms, scaled to sum to one.
QueryModel normalized_query(const std::string& query_id, std::span<const std::string> terms);

struct ScoredDoc {
    std::string doc_id;
    double score;

    friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

struct RankedList {
    std::string query_id;
    std::vector<ScoredDoc> docs;

    friend bool operator==(const RankedList&, const RankedList&) = default;
};

/// Dirichlet-smoothed query likelihood:
///   sum_w weight(w) * log((tf(w,d) + mu * p(w|C)) / (|d| + mu))
/// Terms with zero collection frequency contribute nothing.
double qlm_score(const QueryModel& q, std::uint32_t doc, const InvertedIndex& idx, double mu);
double qlm_score(const QueryModel& q, const std::string& doc_id, const InvertedIndex& idx, double mu);

/// Scores every document containing at least one positively weighted query
/// term. Sorted by descending score, ties by ascending doc id, cut at depth.
RankedList retrieve(const QueryModel& q, const InvertedIndex& idx, double mu = kDefaultMu,
                    std::size_t depth = kDefaultDepth);

/// Evaluates queries independently; output order follows input order.
std::vector<RankedList> retrieve_all(std::span<const QueryModel> queries, const InvertedIndex& idx,
                                     double mu, std::size_t depth, unsigned workers = 1);

/// Six-column TREC run format: "qid Q0 docno rank score tag", scores with six decimals.
void write_run(std::ostream& out, std::span<const RankedList> runs, const std::string& tag);
void write_run(const std::filesystem::path& path, std::span<const RankedList> runs, const std::string& tag);
/// Lists come back in order of first appearance. Throws ParseError with the
/// line number on malformed lines or ranks that disagree with line order.
std::vector<RankedList> read_run(std::istream& in);
std::vector<RankedList> read_run(const std::filesystem::path& path);

}  // namespace qexp
