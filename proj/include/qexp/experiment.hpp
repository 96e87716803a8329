#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qexp/collection.hpp"
#include "qexp/dec_model.hpp"
#include "qexp/embeddings.hpp"
#include "qexp/evaluation.hpp"
#include "qexp/expansion.hpp"
#include "qexp/labeling.hpp"

namespace qexp {

enum class Method { Qlm, Awe, Eqe1, Dec };

inline constexpr Method kAllMethods[] = {Method::Qlm, Method::Awe, Method::Eqe1, Method::Dec};

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

/// Builds the query model a method retrieves with. QLM is the normalized
/// title query; the expansion methods fall back to it when no candidate pool
/// exists. `p_good` is only consulted for DEC.
QueryModel build_query(Method method, const Topic& topic, const std::optional<CandidatePool>& pool,
                       const EmbeddingTable& table, const ExpansionConfig& config,
                       const GoodnessFn& p_good = {});

/// build_query for every topic, building each candidate pool on the way.
/// Topics whose pool cannot be built keep their title query.
std::vector<QueryModel> build_queries(Method method, std::span<const Topic> topics, const InvertedIndex& idx,
                                      const EmbeddingTable& table, const StopwordSet& stopwords,
                                      const ExpansionConfig& config, const GoodnessFn& p_good = {});

struct ExperimentInputs {
    std::span<const Topic> topics;
    const InvertedIndex* index = nullptr;
    const Qrels* qrels = nullptr;
    std::shared_ptr<const EmbeddingTable> embeddings;
    const StopwordSet* stopwords = nullptr;
    const LabeledDataset* dataset = nullptr;  // needed when DEC is evaluated
};

struct ExperimentConfig {
    RetrievalSettings retrieval;
    ExpansionConfig expansion;
    dec::TrainConfig training;
    std::size_t hidden = 200;
    std::size_t representation = 400;
    dec::ModelOptions model_options;
    std::size_t reference_size = dec::kDefaultReferenceSize;
    std::size_t folds = 5;
    std::uint64_t seed = 1;
    unsigned workers = 1;
};

/// Seeded shuffle, then round-robin assignment into k folds.
std::vector<std::vector<std::string>> partition_folds(std::vector<std::string> query_ids, std::size_t k,
                                                      std::uint64_t seed);

struct ExperimentReport {
    std::vector<Method> methods;
    std::map<Method, EvalResult> results;  // per-query metrics pooled over folds
    std::vector<std::vector<std::string>> folds;

    /// Treatment against baseline on the pooled per-query APs.
    Comparison comparison(Method treatment, Method baseline) const;
};

/// For each fold, DEC is trained (with its reference set) on the labeled
/// examples of the other folds' queries only; every method is then run on
/// the held-out queries. Queries without relevant documents are not
/// evaluated.
ExperimentReport cross_validate(const ExperimentInputs& inputs, std::span<const Method> methods,
                                const ExperimentConfig& config);

/// Aligned text table: MAP with significance markers (1/2/3 = significant
/// gain over QLM/AWE/EQE1 at p < 0.05), P@10, and RI against QLM.
std::string format_report(const ExperimentReport& report);
void write_report_tsv(std::ostream& out, const ExperimentReport& report);
/// "query_id,method,ap,p10" rows.
void write_per_query_csv(std::ostream& out, const ExperimentReport& report);

}  // namespace qexp
