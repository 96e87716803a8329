#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qexp/collection.hpp"
#include "qexp/embeddings.hpp"
#include "qexp/evaluation.hpp"
#include "qexp/retrieval.hpp"

namespace qexp {

enum class Label { Good, Neutral, Bad };

std::string_view to_string(Label label);
Label parse_label(std::string_view text);

inline constexpr double kDefaultNeutralityEps = 0.0005;
inline constexpr std::size_t kDefaultPoolSize = 1000;

/// Good iff delta > eps, Bad iff delta < -eps, otherwise Neutral.
Label label_for_delta(double ap_delta, double eps);

struct LabeledExample {
    std::string query_id;
    Tokens query_terms;
    std::string candidate;
    Label label = Label::Neutral;
    double ap_delta = 0.0;
};

struct DatasetMetadata {
    std::string collection;
    double eps = kDefaultNeutralityEps;
    double mu = kDefaultMu;
    std::size_t pool_size = kDefaultPoolSize;
    std::size_t depth = kDefaultDepth;
};

struct LabeledDataset {
    std::vector<LabeledExample> examples;
    DatasetMetadata metadata;

    /// Throws if a (query_id, candidate) pair repeats or a label disagrees
    /// with its delta under metadata.eps.
    void validate() const;
    /// Examples whose query is in `query_ids`, in dataset order.
    LabeledDataset subset(const std::vector<std::string>& query_ids) const;
};

/// Candidate expansion terms for one query: the centroid of its embedded
/// title terms and the nearest terms to it that occur in the index and are
/// neither query terms nor stopwords.
struct CandidatePool {
    Vector centroid;
    std::vector<Neighbor> terms;  // descending cosine to the centroid
};

CandidatePool build_candidate_pool(const Topic& topic, const EmbeddingTable& table, const InvertedIndex& idx,
                                   const StopwordSet& stopwords, std::size_t pool_size = kDefaultPoolSize);
std::vector<std::string> candidate_pool(const Topic& topic, const EmbeddingTable& table,
                                        const InvertedIndex& idx, const StopwordSet& stopwords,
                                        std::size_t pool_size = kDefaultPoolSize);

struct RetrievalSettings {
    double mu = kDefaultMu;
    std::size_t depth = kDefaultDepth;
};

/// AP of the unexpanded title query (weight 1 per term).
double baseline_ap(const Topic& topic, const InvertedIndex& idx, const Qrels& qrels,
                   const RetrievalSettings& settings = {});

/// Adds `candidate` with weight 1 to the title query and labels it by the
/// change in AP relative to `baseline`.
std::pair<Label, double> label_term(const Topic& topic, const std::string& candidate, const InvertedIndex& idx,
                                    const Qrels& qrels, double baseline, double eps,
                                    const RetrievalSettings& settings = {});

struct LabelingConfig {
    std::size_t pool_size = kDefaultPoolSize;
    double eps = kDefaultNeutralityEps;
    RetrievalSettings retrieval;
    std::string collection;
    unsigned workers = 1;
};

/// One example per (query, pool candidate), in topic order then pool order.
/// Queries without relevant documents or without any embedded title term are
/// skipped with a warning.
LabeledDataset build_dataset(std::span<const Topic> topics, const InvertedIndex& idx, const Qrels& qrels,
                             const EmbeddingTable& table, const StopwordSet& stopwords,
                             const LabelingConfig& config);

struct OracleResult {
    PerQuery baseline_ap;
    PerQuery oracle_ap;
    double baseline_map = 0.0;
    double oracle_map = 0.0;
};

/// Expands every labeled query with all of its Good terms (weight 1 each).
OracleResult oracle_run(const LabeledDataset& dataset, std::span<const Topic> topics, const InvertedIndex& idx,
                        const Qrels& qrels, const RetrievalSettings& settings = {});

struct LabelStatistics {
    std::size_t good = 0;
    std::size_t neutral = 0;
    std::size_t bad = 0;

    std::size_t total() const { return good + neutral + bad; }
    double percent(Label l) const;
};

LabelStatistics label_statistics(const LabeledDataset& dataset);
/// Plain-text table: class percentages, oracle MAP and baseline MAP.
std::string format_label_report(const LabelStatistics& stats, const OracleResult& oracle,
                                 const std::string& collection);

/// Line 1: "# " + JSON metadata (including each query's title terms);
/// line 2: column header; then one "query_id\tterm\tlabel\tap_delta" row per example.
void write_dataset(std::ostream& out, const LabeledDataset& dataset);
void write_dataset(const std::filesystem::path& path, const LabeledDataset& dataset);
LabeledDataset read_dataset(std::istream& in);
LabeledDataset read_dataset(const std::filesystem::path& path);

}  // namespace qexp
