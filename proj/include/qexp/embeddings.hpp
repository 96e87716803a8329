#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace qexp {

using Vector = std::vector<double>;

/// Raised when a zero vector reaches a cosine computation.
class ZeroVectorError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Dense term vectors stored row-major; immutable once built.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

    /// Throws on dimension mismatch or duplicate term.
    void add(const std::string& term, std::span<const double> values);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return terms_.size(); }
    bool contains(const std::string& term) const { return lookup_.contains(term); }
    /// Empty span for out-of-vocabulary terms.
    std::span<const double> find(const std::string& term) const;
    std::span<const double> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
    const std::string& term(std::size_t i) const { return terms_.at(i); }
    /// Vocabulary in load order.
    const std::vector<std::string>& terms() const noexcept { return terms_; }

    friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<std::string> terms_;
    std::vector<double> values_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

/// GloVe text format: one term per line followed by `dim` decimals; the
/// dimension comes from the first line. With `restrict_to`, only listed
/// terms are kept.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const std::unordered_set<std::string>* restrict_to = nullptr);
EmbeddingTable parse_embeddings(std::istream& in,
                                const std::unordered_set<std::string>* restrict_to = nullptr);

/// dot(a,b) / (|a| |b|), clamped to [-1, 1]. Throws ZeroVectorError.
double cosine(std::span<const double> a, std::span<const double> b);

/// Mean of the in-vocabulary term vectors; missing terms are skipped with a
/// warning. Throws std::invalid_argument if no term is in the table.
Vector centroid(std::span<const std::string> terms, const EmbeddingTable& table);

struct Neighbor {
    std::string term;
    double similarity;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exhaustive scan. Returns up to k terms by descending cosine to `v`, ties
/// broken by ascending term; terms in `exclude`, terms rejected by `accept`,
/// and zero rows are skipped.
std::vector<Neighbor> top_k_neighbors(std::span<const double> v, std::size_t k, const EmbeddingTable& table,
                                      const std::unordered_set<std::string>& exclude = {},
                                      const std::function<bool(const std::string&)>& accept = {});

}  // namespace qexp
