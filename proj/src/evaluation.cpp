#include "qexp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace qexp {

double average_precision(const RankedList& ranked, const Qrels& qrels, std::size_t depth) {
    const auto total_relevant = qrels.num_relevant(ranked.query_id);
    if (total_relevant == 0) {
        throw std::domain_error(fmt::format("query {} has no relevant documents", ranked.query_id));
    }
    double sum = 0.0;
    std::size_t hits = 0;
    const auto n = std::min(depth, ranked.docs.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (qrels.is_relevant(ranked.query_id, ranked.docs[i].doc_id)) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(total_relevant);
}

double precision_at(const RankedList& ranked, const Qrels& qrels, std::size_t cutoff) {
    if (cutoff == 0) throw std::invalid_argument("cutoff must be >= 1");
    std::size_t hits = 0;
    const auto n = std::min(cutoff, ranked.docs.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (qrels.is_relevant(ranked.query_id, ranked.docs[i].doc_id)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(cutoff);
}

namespace {

void require_same_queries(const PerQuery& a, const PerQuery& b) {
    if (a.size() != b.size()) throw std::invalid_argument("per-query maps cover different query sets");
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first) {
            throw std::invalid_argument(fmt::format("query {} missing from one side", ia->first));
        }
    }
}

}  // namespace

double robustness_index(const PerQuery& baseline, const PerQuery& treatment) {
    require_same_queries(baseline, treatment);
    if (baseline.empty()) throw std::invalid_argument("robustness index over zero queries");
    long improved = 0;
    long declined = 0;
    for (auto ib = baseline.begin(), it = treatment.begin(); ib != baseline.end(); ++ib, ++it) {
        if (it->second > ib->second) ++improved;
        if (it->second < ib->second) ++declined;
    }
    return static_cast<double>(improved - declined) / static_cast<double>(baseline.size());
}

namespace {

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 10000;
    constexpr double kEpsilon = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEpsilon) return h;
    }
    throw std::runtime_error("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("incomplete beta needs a, b > 0");
    if (x < 0.0 || x > 1.0) throw std::domain_error("incomplete beta needs 0 <= x <= 1");
    if (x == 0.0 || x == 1.0) return x;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw std::domain_error("degrees of freedom must be positive");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
    return t > 0 ? 1.0 - tail : tail;
}

TTest paired_t_test(std::span<const double> baseline, std::span<const double> treatment) {
    if (baseline.size() != treatment.size()) throw std::invalid_argument("paired samples differ in size");
    const auto n = baseline.size();
    if (n < 2) throw std::domain_error("paired t-test needs at least two pairs");
    double mean = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean += treatment[i] - baseline[i];
        scale = std::max({scale, std::abs(treatment[i]), std::abs(baseline[i])});
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = treatment[i] - baseline[i] - mean;
        ss += d * d;
    }
    const double variance = ss / static_cast<double>(n - 1);
    // Differences that agree up to rounding of the inputs count as constant.
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * scale;
    if (!(std::sqrt(variance) > noise)) throw std::domain_error("paired differences have zero variance");
    const double t = mean / std::sqrt(variance / static_cast<double>(n));
    const int df = static_cast<int>(n - 1);
    const double x = df / (df + t * t);
    const double p = std::min(1.0, incomplete_beta(0.5 * df, 0.5, x));
    return {t, p, df};
}

TTest paired_t_test(const PerQuery& baseline, const PerQuery& treatment) {
    require_same_queries(baseline, treatment);
    std::vector<double> b;
    std::vector<double> t;
    for (const auto& [_, v] : baseline) b.push_back(v);
    for (const auto& [_, v] : treatment) t.push_back(v);
    return paired_t_test(b, t);
}

EvalResult summarize(PerQuery ap, PerQuery p10, std::size_t depth) {
    EvalResult r;
    r.ap = std::move(ap);
    r.p10 = std::move(p10);
    r.depth = depth;
    for (const auto& [_, v] : r.ap) r.map += v;
    for (const auto& [_, v] : r.p10) r.mean_p10 += v;
    if (!r.ap.empty()) r.map /= static_cast<double>(r.ap.size());
    if (!r.p10.empty()) r.mean_p10 /= static_cast<double>(r.p10.size());
    return r;
}

EvalResult evaluate(std::span<const RankedList> runs, const Qrels& qrels, std::size_t depth) {
    PerQuery ap;
    PerQuery p10;
    for (const auto& list : runs) {
        ap[list.query_id] = average_precision(list, qrels, depth);
        p10[list.query_id] = precision_at(list, qrels, 10);
    }
    return summarize(std::move(ap), std::move(p10), depth);
}

Comparison compare(const EvalResult& baseline, const EvalResult& treatment) {
    Comparison c{baseline, treatment, robustness_index(baseline.ap, treatment.ap), std::nullopt};
    try {
        c.test = paired_t_test(baseline.ap, treatment.ap);
    } catch (const std::domain_error&) {
        // identical or constant differences: no test
    }
    return c;
}

}  // namespace qexp
