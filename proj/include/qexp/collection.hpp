#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace qexp {

using Tokens = std::vector<std::string>;
using StopwordSet = std::unordered_set<std::string>;

/// Raised for malformed input files. `where` is a byte offset or line
/// number, depending on the format being parsed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::uint64_t where)
        : std::runtime_error(what), where_(where) {}
    std::uint64_t where() const noexcept { return where_; }

private:
    std::uint64_t where_;
};

/// Lowercases, splits on anything that is not an ASCII letter or digit and
/// drops stopwords. Pure numbers are kept. No stemming.
Tokens tokenize(std::string_view text, const StopwordSet& stopwords);

/// The bundled INQUERY list (data/inquery_stopwords.txt, embedded at build time).
const StopwordSet& inquery_stopwords();
StopwordSet load_stopwords(const std::filesystem::path& path);

struct Document {
    std::string doc_id;
    Tokens terms;

    std::size_t length() const noexcept { return terms.size(); }
};

/// Parses TREC SGML. `path` may be a single file or a directory, in which
/// case every regular file below it is read in lexicographic path order.
std::vector<Document> ingest_trec_docs(const std::filesystem::path& path,
                                       const StopwordSet& stopwords);
std::vector<Document> parse_trec_docs(std::string_view content, const StopwordSet& stopwords);

struct Topic {
    std::string query_id;
    Tokens title_terms;
};

std::vector<Topic> load_topics(const std::filesystem::path& path, const StopwordSet& stopwords);
std::vector<Topic> parse_topics(std::string_view content, const StopwordSet& stopwords);

class Qrels {
public:
    void set(const std::string& query_id, const std::string& doc_id, int grade);
    int grade(const std::string& query_id, const std::string& doc_id) const;
    bool is_relevant(const std::string& query_id, const std::string& doc_id) const {
        return grade(query_id, doc_id) > 0;
    }
    std::size_t num_relevant(const std::string& query_id) const;
    std::vector<std::string> query_ids() const;
    std::size_t size() const noexcept { return judgments_.size(); }

private:
    std::map<std::pair<std::string, std::string>, int> judgments_;
    std::map<std::string, std::size_t> relevant_count_;
};

Qrels load_qrels(const std::filesystem::path& path);
Qrels parse_qrels(std::string_view content);

struct Posting {
    std::uint32_t doc;  // index into the document table
    std::uint32_t tf;

    friend bool operator==(const Posting&, const Posting&) = default;
};

/// Immutable after construction; safe to share across reader threads.
class InvertedIndex {
public:
    InvertedIndex() = default;

    std::size_t num_docs() const noexcept { return doc_ids_.size(); }
    std::size_t vocabulary_size() const noexcept { return vocabulary_.size(); }
    std::uint64_t total_tokens() const noexcept { return total_tokens_; }

    const std::string& doc_id(std::uint32_t doc) const { return doc_ids_.at(doc); }
    std::uint32_t doc_length(std::uint32_t doc) const { return doc_lengths_.at(doc); }
    /// Throws std::out_of_range for an unknown doc id.
    std::uint32_t doc_index(const std::string& doc_id) const;
    bool has_doc(const std::string& doc_id) const { return doc_lookup_.contains(doc_id); }

    bool contains(const std::string& term) const { return term_lookup_.contains(term); }
    std::uint64_t collection_freq(const std::string& term) const;
    /// Postings sorted by ascending doc index; empty for unknown terms.
    std::span<const Posting> postings(const std::string& term) const;
    std::uint32_t term_frequency(const std::string& term, std::uint32_t doc) const;

    /// Sorted vocabulary.
    const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }

    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;
    static InvertedIndex load(std::istream& in);
    static InvertedIndex load(const std::filesystem::path& path);

    friend bool operator==(const InvertedIndex& a, const InvertedIndex& b) {
        return a.vocabulary_ == b.vocabulary_ && a.collection_freq_ == b.collection_freq_ &&
               a.postings_ == b.postings_ && a.doc_ids_ == b.doc_ids_ &&
               a.doc_lengths_ == b.doc_lengths_ && a.total_tokens_ == b.total_tokens_;
    }

private:
    friend InvertedIndex build_index(std::span<const Document> docs, unsigned workers);
    void rebuild_lookups();

    std::vector<std::string> vocabulary_;
    std::vector<std::uint64_t> collection_freq_;
    std::vector<std::vector<Posting>> postings_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    std::uint64_t total_tokens_ = 0;

    std::unordered_map<std::string, std::uint32_t> term_lookup_;
    std::unordered_map<std::string, std::uint32_t> doc_lookup_;
};

/// Documents keep their input order as doc indices. Work is split across
/// `workers` threads (0 = hardware concurrency); the result does not depend
/// on the worker count.
InvertedIndex build_index(std::span<const Document> docs, unsigned workers = 1);

inline constexpr char kIndexMagic[4] = {'Q', 'X', 'I', 'X'};
inline constexpr std::uint8_t kIndexVersion = 1;

}  // namespace qexp
