#include "qexp/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

namespace qexp {

void ExpansionConfig::validate() const {
    if (m < 1) throw std::invalid_argument("m must be >= 1");
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must be in [0, 1]");
    if (pool_size < 1) throw std::invalid_argument("pool_size must be >= 1");
}

QueryModel interpolate(const Topic& topic, std::span<const Neighbor> expansion, double beta) {
    auto model = normalized_query(topic.query_id, topic.title_terms);
    double total = 0.0;
    for (const auto& e : expansion) {
        if (!(e.similarity >= 0.0) || !std::isfinite(e.similarity)) {
            throw std::invalid_argument(fmt::format("expansion weight of '{}' must be finite and >= 0", e.term));
        }
        total += e.similarity;
    }
    if (total <= 0.0) return model;
    for (auto& [_, w] : model.weights) w *= beta;
    const double rest = 1.0 - beta;
    for (const auto& e : expansion) {
        const double w = rest * (e.similarity / total);
        if (w > 0.0) model.weights[e.term] += w;
    }
    return model;
}

std::vector<Neighbor> awe_terms(const CandidatePool& pool, const ExpansionConfig& config) {
    std::vector<Neighbor> terms(pool.terms.begin(),
                                pool.terms.begin() + static_cast<std::ptrdiff_t>(std::min(config.m, pool.terms.size())));
    for (auto& t : terms) t.similarity = std::max(0.0, t.similarity);
    return terms;
}

QueryModel awe_expand(const Topic& topic, const CandidatePool& pool, const ExpansionConfig& config) {
    config.validate();
    return interpolate(topic, awe_terms(pool, config), config.beta);
}

std::vector<Neighbor> eqe1_scores(const Topic& topic, const EmbeddingTable& table, const CandidatePool& pool) {
    if (pool.terms.empty()) throw std::invalid_argument(fmt::format("query {}: empty candidate pool", topic.query_id));
    std::vector<std::span<const double>> candidates;
    candidates.reserve(pool.terms.size());
    for (const auto& n : pool.terms) {
        const auto v = table.find(n.term);
        if (v.empty()) throw std::invalid_argument(fmt::format("pool term '{}' has no embedding", n.term));
        candidates.push_back(v);
    }

    std::vector<double> log_score(pool.terms.size(), 0.0);
    std::size_t used = 0;
    for (const auto& w : topic.title_terms) {
        const auto qv = table.find(w);
        if (qv.empty()) continue;
        ++used;
        std::vector<double> sims(candidates.size());
        double max_sim = -2.0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            sims[i] = cosine(candidates[i], qv);
            max_sim = std::max(max_sim, sims[i]);
        }
        double norm = 0.0;
        for (double s : sims) norm += std::exp(s - max_sim);
        const double log_norm = max_sim + std::log(norm);
        for (std::size_t i = 0; i < sims.size(); ++i) log_score[i] += sims[i] - log_norm;
    }
    if (used == 0) throw std::invalid_argument(fmt::format("query {} has no embedded term", topic.query_id));

    std::vector<Neighbor> scores;
    scores.reserve(pool.terms.size());
    for (std::size_t i = 0; i < pool.terms.size(); ++i) scores.push_back({pool.terms[i].term, std::exp(log_score[i])});
    return scores;
}

QueryModel eqe1_expand(const Topic& topic, const EmbeddingTable& table, const CandidatePool& pool,
                       const ExpansionConfig& config) {
    config.validate();
    auto scores = eqe1_scores(topic, table, pool);
    const auto n = std::min(config.m, scores.size());
    std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(n), scores.end(),
                      [](const Neighbor& a, const Neighbor& b) {
                          if (a.similarity != b.similarity) return a.similarity > b.similarity;
                          return a.term < b.term;
                      });
    scores.resize(n);
    return interpolate(topic, scores, config.beta);
}

QueryModel dec_expand(const Topic& topic, const CandidatePool& pool, const GoodnessFn& p_good,
                      const ExpansionConfig& config) {
    config.validate();
    auto terms = awe_terms(pool, config);
    for (auto& t : terms) {
        const double p = p_good(topic.title_terms, t.term);
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::out_of_range(fmt::format("P(Good) for '{}' is {}, outside [0, 1]", t.term, p));
        }
        t.similarity *= 1.0 + config.alpha * p;
    }
    return interpolate(topic, terms, config.beta);
}

void write_query_models(std::ostream& out, std::span<const QueryModel> queries) {
    for (const auto& q : queries) {
        for (const auto& [term, w] : q.weights) out << fmt::format("{}\t{}\t{}\n", q.query_id, term, w);
    }
}

void write_query_models(const std::filesystem::path& path, std::span<const QueryModel> queries) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    write_query_models(out, queries);
}

}  // namespace qexp
