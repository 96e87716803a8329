#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qexp/collection.hpp"
#include "qexp/embeddings.hpp"
#include "qexp/labeling.hpp"
#include "qexp/retrieval.hpp"

namespace qexp {

struct ExpansionConfig {
    std::size_t m = 10;       // expansion terms added
    double alpha = 1.0;       // DEC reweighting strength
    double beta = 0.5;        // weight of the original query in the interpolation
    std::size_t pool_size = kDefaultPoolSize;

    void validate() const;
};

/// beta * (normalized original query) + (1 - beta) * (normalized expansion
/// weights). Expansion weights must be non-negative; if they sum to zero
/// the original query is returned alone. Zero-weight terms are dropped.
QueryModel interpolate(const Topic& topic, std::span<const Neighbor> expansion, double beta);

/// Top-m pool terms weighted by cosine to the query centroid. Negative
/// cosines are clamped to zero.
QueryModel awe_expand(const Topic& topic, const CandidatePool& pool, const ExpansionConfig& config);
/// The m (term, weight) pairs AWE selects, before normalization.
std::vector<Neighbor> awe_terms(const CandidatePool& pool, const ExpansionConfig& config);

/// score(x) = prod over embedded query terms w of
///   exp(cos(x, w)) / sum over pool x' of exp(cos(x', w)).
/// Returned in pool order. Throws std::invalid_argument on an empty pool or
/// a query without embedded terms.
std::vector<Neighbor> eqe1_scores(const Topic& topic, const EmbeddingTable& table, const CandidatePool& pool);
QueryModel eqe1_expand(const Topic& topic, const EmbeddingTable& table, const CandidatePool& pool,
                       const ExpansionConfig& config);

/// P(Good | query, candidate).
using GoodnessFn = std::function<double(std::span<const std::string>, const std::string&)>;

/// AWE's selection, each weight multiplied by (1 + alpha * P(Good)).
QueryModel dec_expand(const Topic& topic, const CandidatePool& pool, const GoodnessFn& p_good,
                      const ExpansionConfig& config);

/// "query_id\tterm\tweight" rows, terms in model order.
void write_query_models(std::ostream& out, std::span<const QueryModel> queries);
void write_query_models(const std::filesystem::path& path, std::span<const QueryModel> queries);

}  // namespace qexp
