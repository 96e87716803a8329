#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qexp/collection.hpp"
#include "qexp/retrieval.hpp"

namespace qexp {

using PerQuery = std::map<std::string, double>;

/// (1/R) * sum over relevant ranks i <= depth of (relevant seen up to i) / i,
/// where R counts every relevant document in the qrels. Throws
/// std::domain_error when the query has no relevant documents.
double average_precision(const RankedList& ranked, const Qrels& qrels, std::size_t depth = kDefaultDepth);

/// Relevant documents in the top `cutoff`, divided by `cutoff` even when
/// fewer documents were retrieved.
double precision_at(const RankedList& ranked, const Qrels& qrels, std::size_t cutoff = 10);

/// (N+ - N-) / |Q|. Exact ties count in neither N+ nor N-.
double robustness_index(const PerQuery& baseline, const PerQuery& treatment);

struct TTest {
    double t;
    double p;  // two-tailed
    int df;
};

/// Paired t-test over treatment - baseline. Throws std::domain_error when
/// there are fewer than two pairs or the differences have zero variance.
TTest paired_t_test(std::span<const double> baseline, std::span<const double> treatment);
TTest paired_t_test(const PerQuery& baseline, const PerQuery& treatment);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
/// CDF of Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

struct EvalResult {
    PerQuery ap;
    PerQuery p10;
    double map = 0.0;
    double mean_p10 = 0.0;
    std::size_t depth = kDefaultDepth;
};

/// Per-query AP and P@10 over the given lists, with their means.
EvalResult evaluate(std::span<const RankedList> runs, const Qrels& qrels, std::size_t depth = kDefaultDepth);
/// Recomputes the means from per-query maps.
EvalResult summarize(PerQuery ap, PerQuery p10, std::size_t depth = kDefaultDepth);

struct Comparison {
    EvalResult baseline;
    EvalResult treatment;
    double ri = 0.0;
    std::optional<TTest> test;  // empty when the t statistic is undefined

    bool significant(double level = 0.05) const { return test && test->p < level && test->t > 0; }
};

Comparison compare(const EvalResult& baseline, const EvalResult& treatment);

}  // namespace qexp
