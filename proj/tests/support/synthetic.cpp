#include "synthetic.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "qexp/detail/random.hpp"

namespace qexp::testing {

namespace {

Vector gaussian(std::size_t dim, double scale, std::mt19937_64& rng) {
    Vector v(dim);
    const double s = scale / std::sqrt(static_cast<double>(dim));
    for (auto& x : v) x = s * detail::normal(rng);
    return v;
}

Vector unit(std::size_t dim, std::mt19937_64& rng) {
    auto v = gaussian(dim, 1.0, rng);
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
}

Vector combine(const Vector& a, double wb, const Vector& b, const Vector& noise) {
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + wb * b[i] + noise[i];
    return out;
}

}  // namespace

MiniCorpus random_corpus(std::uint64_t seed, std::size_t max_docs, std::size_t max_vocab) {
    std::mt19937_64 rng(seed);
    MiniCorpus corpus;
    const auto vocab_size = 1 + detail::uniform_index(rng, max_vocab);
    for (std::size_t i = 0; i < vocab_size; ++i) corpus.vocabulary.push_back(fmt::format("w{}", i));
    const auto num_docs = 1 + detail::uniform_index(rng, max_docs);
    for (std::size_t d = 0; d < num_docs; ++d) {
        Document doc;
        doc.doc_id = fmt::format("doc{:03}", num_docs - d);  // ids deliberately not in insertion order
        if (d > 0 && detail::uniform01(rng) < 0.2) {
            doc.terms = corpus.docs[detail::uniform_index(rng, d)].terms;
        } else {
            const auto len = 1 + detail::uniform_index(rng, 30);
            for (std::size_t k = 0; k < len; ++k) {
                // squaring skews draws toward low-numbered terms
                const double u = detail::uniform01(rng);
                doc.terms.push_back(corpus.vocabulary[static_cast<std::size_t>(u * u * static_cast<double>(vocab_size))]);
            }
        }
        corpus.docs.push_back(std::move(doc));
    }
    return corpus;
}

SeparableData separable_dataset(std::uint64_t seed, std::size_t examples, std::size_t dim) {
    std::mt19937_64 rng(seed);
    auto table = std::make_shared<EmbeddingTable>();
    const auto center = unit(dim, rng);
    constexpr std::size_t kQueryWords = 10;
    for (std::size_t q = 0; q < kQueryWords; ++q) table->add(fmt::format("query{}", q), gaussian(dim, 1.0, rng));

    SeparableData out;
    out.dataset.metadata.collection = "separable";
    for (std::size_t i = 0; i < examples; ++i) {
        const bool good = i % 2 == 0;
        const auto noise = gaussian(dim, 0.3, rng);
        Vector v(dim);
        for (std::size_t k = 0; k < dim; ++k) v[k] = (good ? 1.0 : -1.0) * center[k] + noise[k];
        const auto candidate = fmt::format("cand{}", i);
        table->add(candidate, v);
        LabeledExample ex;
        ex.query_id = fmt::format("s{}", i % 20);
        ex.query_terms = {fmt::format("query{}", i % kQueryWords)};
        ex.candidate = candidate;
        ex.label = good ? Label::Good : Label::Bad;
        ex.ap_delta = good ? 0.01 : -0.01;
        out.dataset.examples.push_back(std::move(ex));
    }
    out.embeddings = std::move(table);
    return out;
}

MismatchCollection mismatch_collection(std::uint64_t seed, const MismatchParams& p) {
    std::mt19937_64 rng(seed);
    auto table = std::make_shared<EmbeddingTable>();
    MismatchCollection out;

    const auto good_dir = unit(p.dim, rng);
    const auto bad_dir = unit(p.dim, rng);
    std::vector<std::string> filler;
    for (std::size_t k = 0; k < p.filler_vocabulary; ++k) {
        filler.push_back(fmt::format("f{}", k));
        table->add(filler.back(), gaussian(p.dim, 1.0, rng));
    }
    auto add_filler = [&](Document& doc) {
        const auto n = 15 + detail::uniform_index(rng, 16);
        for (std::size_t k = 0; k < n; ++k) doc.terms.push_back(filler[detail::uniform_index(rng, filler.size())]);
    };
    auto tf = [&](std::size_t lo, std::size_t hi) { return lo + detail::uniform_index(rng, hi - lo + 1); };
    auto push = [](Document& doc, const std::string& term, std::size_t count) {
        for (std::size_t k = 0; k < count; ++k) doc.terms.push_back(term);
    };
    std::size_t next_doc = 0;
    auto new_doc = [&] {
        Document d;
        d.doc_id = fmt::format("MM{:05}", next_doc++);
        return d;
    };

    for (std::size_t t = 0; t < p.topics; ++t) {
        const auto dir = unit(p.dim, rng);
        Topic topic{fmt::format("{}", 101 + t), {fmt::format("q{}", t)}};
        const auto& title = topic.title_terms.front();
        table->add(title, combine(dir, 0.0, dir, gaussian(p.dim, 0.2, rng)));
        std::vector<std::string> good, bad;
        for (std::size_t j = 0; j < p.good_terms; ++j) {
            good.push_back(fmt::format("g{}x{}", t, j));
            table->add(good.back(), combine(dir, 0.7, good_dir, gaussian(p.dim, 0.25, rng)));
        }
        for (std::size_t j = 0; j < p.bad_terms; ++j) {
            bad.push_back(fmt::format("b{}x{}", t, j));
            table->add(bad.back(), combine(dir, 0.7, bad_dir, gaussian(p.dim, 0.25, rng)));
        }

        auto some = [&](const std::vector<std::string>& terms, Document& doc) {
            for (const auto& w : terms) {
                if (detail::uniform01(rng) < 0.7) push(doc, w, tf(1, 2));
            }
        };
        auto two_of = [&](const std::vector<std::string>& terms, Document& doc) {
            const auto a = detail::uniform_index(rng, terms.size());
            const auto b = (a + 1 + detail::uniform_index(rng, terms.size() - 1)) % terms.size();
            push(doc, terms[a], tf(1, 2));
            push(doc, terms[b], tf(1, 2));
        };

        for (std::size_t i = 0; i < p.relevant_with_title; ++i) {
            auto d = new_doc();
            push(d, title, tf(1, 2));
            some(good, d);
            add_filler(d);
            out.qrels.set(topic.query_id, d.doc_id, 1);
            out.docs.push_back(std::move(d));
        }
        for (std::size_t i = 0; i < p.relevant_synonym_only; ++i) {
            auto d = new_doc();
            two_of(good, d);
            add_filler(d);
            out.qrels.set(topic.query_id, d.doc_id, 1);
            out.docs.push_back(std::move(d));
        }
        for (std::size_t i = 0; i < p.distractors_with_title; ++i) {
            auto d = new_doc();
            push(d, title, tf(1, 2));
            some(bad, d);
            add_filler(d);
            out.qrels.set(topic.query_id, d.doc_id, 0);
            out.docs.push_back(std::move(d));
        }
        for (std::size_t i = 0; i < p.distractors_bad_only; ++i) {
            auto d = new_doc();
            two_of(bad, d);
            add_filler(d);
            out.docs.push_back(std::move(d));
        }
        out.topics.push_back(std::move(topic));
        out.good.push_back(std::move(good));
        out.bad.push_back(std::move(bad));
    }
    for (std::size_t i = 0; i < p.background_docs; ++i) {
        auto d = new_doc();
        add_filler(d);
        out.docs.push_back(std::move(d));
    }
    for (auto& d : out.docs) detail::shuffle(std::span(d.terms), rng);
    out.embeddings = std::move(table);
    return out;
}

LabelingFixture labeling_fixture() {
    const std::vector<Document> docs = {
        {"d1", {"apple", "apple", "pie", "common", "fa"}},
        {"d2", {"apple", "pie", "common", "fb", "fc"}},
        {"d3", {"apple", "apple", "truck", "common", "fd"}},
        {"d4", {"apple", "truck", "common", "fe", "ff"}},
    };
    LabelingFixture f;
    f.index = build_index(docs);
    f.topic = {"7", {"apple"}};
    f.qrels.set("7", "d1", 1);
    f.qrels.set("7", "d2", 1);
    f.qrels.set("7", "d3", 0);
    return f;
}

}  // namespace qexp::testing
