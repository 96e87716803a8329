#include "qexp/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qexp/collection.hpp"

namespace qexp {

void EmbeddingTable::add(const std::string& term, std::span<const double> values) {
    if (dim_ == 0) dim_ = values.size();
    if (values.size() != dim_ || dim_ == 0) {
        throw std::invalid_argument(
            fmt::format("vector for '{}' has dimension {}, expected {}", term, values.size(), dim_));
    }
    if (!lookup_.emplace(term, terms_.size()).second) {
        throw std::invalid_argument(fmt::format("duplicate embedding for '{}'", term));
    }
    terms_.push_back(term);
    values_.insert(values_.end(), values.begin(), values.end());
}

std::span<const double> EmbeddingTable::find(const std::string& term) const {
    const auto it = lookup_.find(term);
    if (it == lookup_.end()) return {};
    return row(it->second);
}

EmbeddingTable parse_embeddings(std::istream& in, const std::unordered_set<std::string>* restrict_to) {
    EmbeddingTable table;
    std::size_t dim = 0;
    std::size_t line_no = 0;
    std::string line;
    std::vector<double> values;
    bool any_nonzero = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        const char* p = line.data();
        const char* end = p + line.size();
        auto skip_ws = [&] {
            while (p < end && (*p == ' ' || *p == '\t')) ++p;
        };
        skip_ws();
        const char* term_begin = p;
        while (p < end && *p != ' ' && *p != '\t') ++p;
        std::string term(term_begin, p);

        values.clear();
        while (true) {
            skip_ws();
            if (p >= end) break;
            double v = 0.0;
            const auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc{} || (next < end && *next != ' ' && *next != '\t')) {
                throw ParseError(fmt::format("embeddings line {}: bad number", line_no), line_no);
            }
            values.push_back(v);
            p = next;
        }
        if (dim == 0) {
            if (values.empty()) {
                throw ParseError(fmt::format("embeddings line {}: no vector components", line_no), line_no);
            }
            dim = values.size();
            table = EmbeddingTable(dim);
        } else if (values.size() != dim) {
            throw ParseError(fmt::format("embeddings line {}: dimension {} but expected {}", line_no,
                                         values.size(), dim),
                             line_no);
        }
        if (restrict_to != nullptr && !restrict_to->contains(term)) continue;
        if (table.contains(term)) {
            throw ParseError(fmt::format("embeddings line {}: duplicate term '{}'", line_no, term), line_no);
        }
        any_nonzero = any_nonzero || std::any_of(values.begin(), values.end(), [](double v) { return v != 0.0; });
        table.add(term, values);
    }
    if (dim == 0) throw ParseError("embeddings file is empty", 0);
    if (!any_nonzero) throw ParseError("embedding table has no non-zero vector", line_no);
    return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const std::unordered_set<std::string>* restrict_to) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open embeddings '{}'", path.string()));
    return parse_embeddings(in, restrict_to);
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(fmt::format("cosine of vectors of length {} and {}", a.size(), b.size()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw ZeroVectorError("cosine is undefined for a zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

Vector centroid(std::span<const std::string> terms, const EmbeddingTable& table) {
    Vector sum(table.dim(), 0.0);
    std::size_t found = 0;
    for (const auto& t : terms) {
        const auto v = table.find(t);
        if (v.empty()) {
            spdlog::warn("term '{}' has no embedding; left out of the centroid", t);
            continue;
        }
        for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
        ++found;
    }
    if (found == 0) throw std::invalid_argument("no query term has an embedding");
    for (auto& x : sum) x /= static_cast<double>(found);
    return sum;
}

std::vector<Neighbor> top_k_neighbors(std::span<const double> v, std::size_t k, const EmbeddingTable& table,
                                      const std::unordered_set<std::string>& exclude,
                                      const std::function<bool(const std::string&)>& accept) {
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
        throw ZeroVectorError("neighbor search from a zero vector");
    }
    std::vector<Neighbor> scored;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& term = table.term(i);
        if (exclude.contains(term)) continue;
        if (accept && !accept(term)) continue;
        const auto r = table.row(i);
        if (std::all_of(r.begin(), r.end(), [](double x) { return x == 0.0; })) continue;
        scored.push_back({term, cosine(v, r)});
    }
    auto order = [](const Neighbor& a, const Neighbor& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.term < b.term;
    };
    const auto n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), order);
    scored.resize(n);
    return scored;
}

}  // namespace qexp
