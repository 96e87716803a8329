#include "qexp/collection.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qexp/detail/binary_io.hpp"
#include "qexp/parallel.hpp"

namespace qexp {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::size_t line_of(std::string_view content, std::size_t offset) {
    return 1 + static_cast<std::size_t>(
                   std::count(content.begin(), content.begin() + std::min(offset, content.size()), '\n'));
}

// Replaces every <...> run with a space.
std::string strip_tags(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_tag = false;
    for (char c : s) {
        if (c == '<') {
            in_tag = true;
            out.push_back(' ');
        } else if (c == '>' && in_tag) {
            in_tag = false;
        } else if (!in_tag) {
            out.push_back(c);
        }
    }
    return out;
}

// Appends the bodies of all <tag>...</tag> elements inside [begin, end).
// Returns false if there were none.
bool collect_elements(std::string_view content, std::size_t begin, std::size_t end,
                      std::string_view tag, std::string& sink) {
    const std::string open = fmt::format("<{}>", tag);
    const std::string close = fmt::format("</{}>", tag);
    bool found = false;
    std::size_t pos = begin;
    while (true) {
        const auto o = content.find(open, pos);
        if (o == std::string_view::npos || o >= end) break;
        const auto c = content.find(close, o + open.size());
        if (c == std::string_view::npos || c + close.size() > end) {
            throw ParseError(fmt::format("unclosed <{}> at byte offset {}", tag, o), o);
        }
        sink.append(content.substr(o + open.size(), c - o - open.size()));
        sink.push_back(' ');
        found = true;
        pos = c + close.size();
    }
    return found;
}

}  // namespace

Tokens tokenize(std::string_view text, const StopwordSet& stopwords) {
    Tokens tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            if (!stopwords.contains(current)) tokens.push_back(current);
            current.clear();
        }
    };
    for (char c : text) {
        if (is_word_char(c)) {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

StopwordSet load_stopwords(const std::filesystem::path& path) {
    const auto content = read_file(path);
    StopwordSet words;
    std::istringstream in(content);
    std::string w;
    while (in >> w) {
        std::transform(w.begin(), w.end(), w.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        words.insert(w);
    }
    return words;
}

std::vector<Document> parse_trec_docs(std::string_view content, const StopwordSet& stopwords) {
    static constexpr std::string_view kOpen = "<DOC>";
    static constexpr std::string_view kClose = "</DOC>";

    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    std::size_t pos = 0;
    while (true) {
        const auto open = content.find(kOpen, pos);
        const auto stray_close = content.find(kClose, pos);
        if (open == std::string_view::npos) {
            if (stray_close != std::string_view::npos) {
                throw ParseError(fmt::format("</DOC> without <DOC> at byte offset {}", stray_close),
                                 stray_close);
            }
            if (!trim(content.substr(pos)).empty()) {
                spdlog::debug("ignoring trailing text after last </DOC>");
            }
            break;
        }
        if (stray_close < open) {
            throw ParseError(fmt::format("</DOC> without <DOC> at byte offset {}", stray_close),
                             stray_close);
        }
        const auto close = content.find(kClose, open + kOpen.size());
        const auto next_open = content.find(kOpen, open + kOpen.size());
        if (close == std::string_view::npos || (next_open != std::string_view::npos && next_open < close)) {
            throw ParseError(fmt::format("unclosed <DOC> at byte offset {}", open), open);
        }
        const auto body_begin = open + kOpen.size();

        std::string docno;
        if (!collect_elements(content, body_begin, close, "DOCNO", docno)) {
            throw ParseError(fmt::format("<DOC> at byte offset {} has no <DOCNO>", open), open);
        }
        Document doc;
        doc.doc_id = std::string(trim(docno));
        if (doc.doc_id.empty()) {
            throw ParseError(fmt::format("empty <DOCNO> in <DOC> at byte offset {}", open), open);
        }
        if (!seen.insert(doc.doc_id).second) {
            throw ParseError(fmt::format("duplicate DOCNO '{}' at byte offset {}", doc.doc_id, open), open);
        }

        std::string text;
        if (!collect_elements(content, body_begin, close, "TEXT", text)) {
            // Web collections carry the page after the header block instead.
            std::string body(content.substr(body_begin, close - body_begin));
            for (std::string_view tag : {"DOCNO", "DOCHDR", "DOCOLDNO"}) {
                const std::string o = fmt::format("<{}>", tag);
                const std::string c = fmt::format("</{}>", tag);
                for (auto b = body.find(o); b != std::string::npos; b = body.find(o)) {
                    const auto e = body.find(c, b);
                    if (e == std::string::npos) break;
                    body.erase(b, e + c.size() - b);
                }
            }
            text = std::move(body);
        }
        doc.terms = tokenize(strip_tags(text), stopwords);
        docs.push_back(std::move(doc));
        pos = close + kClose.size();
    }
    return docs;
}

std::vector<Document> ingest_trec_docs(const std::filesystem::path& path, const StopwordSet& stopwords) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
        for (const auto& entry : fs::recursive_directory_iterator(path)) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }

    std::vector<Document> all;
    std::unordered_set<std::string> seen;
    for (const auto& file : files) {
        std::vector<Document> docs;
        try {
            docs = parse_trec_docs(read_file(file), stopwords);
        } catch (const ParseError& e) {
            throw ParseError(fmt::format("{}: {}", file.string(), e.what()), e.where());
        }
        for (auto& d : docs) {
            if (!seen.insert(d.doc_id).second) {
                throw ParseError(fmt::format("{}: duplicate DOCNO '{}'", file.string(), d.doc_id), 0);
            }
            all.push_back(std::move(d));
        }
    }
    return all;
}

std::vector<Topic> parse_topics(std::string_view content, const StopwordSet& stopwords) {
    // Tags are matched case-insensitively; TREC topic files are not consistent.
    std::string lowered(content);
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const std::string_view lc(lowered);

    // Text after `tag` up to the next '<' (or the block end).
    auto field = [&](std::size_t begin, std::size_t end, std::string_view tag,
                     std::size_t& at) -> std::optional<std::string_view> {
        const auto t = lc.find(tag, begin);
        if (t == std::string_view::npos || t >= end) return std::nullopt;
        at = t;
        const auto start = t + tag.size();
        auto stop = lc.find('<', start);
        if (stop == std::string_view::npos || stop > end) stop = end;
        return content.substr(start, stop - start);
    };
    auto strip_prefix = [](std::string_view s, std::string_view prefix) {
        s = trim(s);
        if (s.size() >= prefix.size()) {
            std::string head(s.substr(0, prefix.size()));
            std::transform(head.begin(), head.end(), head.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            if (head == prefix) s = trim(s.substr(prefix.size()));
        }
        return s;
    };

    std::vector<Topic> topics;
    std::size_t pos = 0;
    while (true) {
        const auto open = lc.find("<top>", pos);
        if (open == std::string_view::npos) break;
        const auto close = lc.find("</top>", open);
        const auto next_open = lc.find("<top>", open + 5);
        if (close == std::string_view::npos || (next_open != std::string_view::npos && next_open < close)) {
            const auto line = line_of(content, open);
            throw ParseError(fmt::format("unclosed <top> at line {}", line), line);
        }
        std::size_t at = open;
        const auto num = field(open, close, "<num>", at);
        if (!num) {
            const auto line = line_of(content, open);
            throw ParseError(fmt::format("topic at line {} has no <num>", line), line);
        }
        const auto qid = strip_prefix(*num, "number:");
        if (qid.empty()) {
            const auto line = line_of(content, at);
            throw ParseError(fmt::format("empty <num> at line {}", line), line);
        }
        const auto title = field(open, close, "<title>", at);
        if (!title) {
            const auto line = line_of(content, open);
            throw ParseError(fmt::format("topic at line {} has no <title>", line), line);
        }
        Topic topic{std::string(qid), tokenize(strip_prefix(*title, "topic:"), stopwords)};
        if (topic.title_terms.empty()) {
            spdlog::warn("topic {} has an empty title after stopping; skipped", topic.query_id);
        } else {
            topics.push_back(std::move(topic));
        }
        pos = close + 6;
    }
    return topics;
}

std::vector<Topic> load_topics(const std::filesystem::path& path, const StopwordSet& stopwords) {
    return parse_topics(read_file(path), stopwords);
}

void Qrels::set(const std::string& query_id, const std::string& doc_id, int grade) {
    if (grade < 0) throw std::invalid_argument("relevance grades must be >= 0");
    auto [it, inserted] = judgments_.try_emplace({query_id, doc_id}, grade);
    if (!inserted) {
        if (it->second > 0) --relevant_count_[query_id];
        it->second = grade;
    }
    auto& count = relevant_count_[query_id];
    if (grade > 0) ++count;
}

int Qrels::grade(const std::string& query_id, const std::string& doc_id) const {
    const auto it = judgments_.find({query_id, doc_id});
    return it == judgments_.end() ? 0 : it->second;
}

std::size_t Qrels::num_relevant(const std::string& query_id) const {
    const auto it = relevant_count_.find(query_id);
    return it == relevant_count_.end() ? 0 : it->second;
}

std::vector<std::string> Qrels::query_ids() const {
    std::vector<std::string> ids;
    for (const auto& [qid, _] : relevant_count_) ids.push_back(qid);
    return ids;
}

Qrels parse_qrels(std::string_view content) {
    Qrels qrels;
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::istringstream fields(line);
        std::vector<std::string> cols;
        for (std::string f; fields >> f;) cols.push_back(f);
        if (cols.size() != 4) {
            throw ParseError(fmt::format("qrels line {}: expected 4 columns, got {}", line_no, cols.size()),
                             line_no);
        }
        int grade = 0;
        std::size_t consumed = 0;
        try {
            grade = std::stoi(cols[3], &consumed);
        } catch (const std::exception&) {
            consumed = 0;
        }
        if (consumed != cols[3].size()) {
            throw ParseError(fmt::format("qrels line {}: grade '{}' is not an integer", line_no, cols[3]),
                             line_no);
        }
        if (grade < 0) {
            throw ParseError(fmt::format("qrels line {}: negative grade {}", line_no, grade), line_no);
        }
        qrels.set(cols[0], cols[2], grade);
    }
    return qrels;
}

Qrels load_qrels(const std::filesystem::path& path) {
    return parse_qrels(read_file(path));
}

// ---------------------------------------------------------------------------
// InvertedIndex

std::uint32_t InvertedIndex::doc_index(const std::string& doc_id) const {
    const auto it = doc_lookup_.find(doc_id);
    if (it == doc_lookup_.end()) throw std::out_of_range(fmt::format("unknown doc id '{}'", doc_id));
    return it->second;
}

std::uint64_t InvertedIndex::collection_freq(const std::string& term) const {
    const auto it = term_lookup_.find(term);
    return it == term_lookup_.end() ? 0 : collection_freq_[it->second];
}

std::span<const Posting> InvertedIndex::postings(const std::string& term) const {
    const auto it = term_lookup_.find(term);
    if (it == term_lookup_.end()) return {};
    return postings_[it->second];
}

std::uint32_t InvertedIndex::term_frequency(const std::string& term, std::uint32_t doc) const {
    const auto list = postings(term);
    const auto it = std::lower_bound(list.begin(), list.end(), doc,
                                     [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    return (it != list.end() && it->doc == doc) ? it->tf : 0;
}

void InvertedIndex::rebuild_lookups() {
    term_lookup_.clear();
    doc_lookup_.clear();
    term_lookup_.reserve(vocabulary_.size());
    for (std::uint32_t i = 0; i < vocabulary_.size(); ++i) term_lookup_.emplace(vocabulary_[i], i);
    doc_lookup_.reserve(doc_ids_.size());
    for (std::uint32_t i = 0; i < doc_ids_.size(); ++i) doc_lookup_.emplace(doc_ids_[i], i);
}

InvertedIndex build_index(std::span<const Document> docs, unsigned workers) {
    InvertedIndex idx;
    idx.doc_ids_.reserve(docs.size());
    idx.doc_lengths_.reserve(docs.size());
    {
        std::unordered_set<std::string> seen;
        for (const auto& d : docs) {
            if (!seen.insert(d.doc_id).second) {
                throw std::invalid_argument(fmt::format("duplicate doc id '{}'", d.doc_id));
            }
            idx.doc_ids_.push_back(d.doc_id);
            idx.doc_lengths_.push_back(static_cast<std::uint32_t>(d.length()));
            idx.total_tokens_ += d.length();
        }
    }

    // Contiguous partitions keep per-term postings in doc order after the merge.
    using Partial = std::map<std::string, std::vector<Posting>>;
    const std::size_t parts = std::max<std::size_t>(1, std::min<std::size_t>(resolve_workers(workers), docs.size()));
    std::vector<Partial> partials(parts);
    parallel_for(parts, workers, [&](std::size_t p) {
        const std::size_t begin = docs.size() * p / parts;
        const std::size_t end = docs.size() * (p + 1) / parts;
        auto& local = partials[p];
        for (std::size_t i = begin; i < end; ++i) {
            std::map<std::string_view, std::uint32_t> counts;
            for (const auto& t : docs[i].terms) ++counts[t];
            for (const auto& [term, tf] : counts) {
                local[std::string(term)].push_back({static_cast<std::uint32_t>(i), tf});
            }
        }
    });

    std::map<std::string, std::vector<Posting>> merged;
    for (auto& partial : partials) {
        for (auto& [term, list] : partial) {
            auto& dst = merged[term];
            dst.insert(dst.end(), list.begin(), list.end());
        }
    }
    idx.vocabulary_.reserve(merged.size());
    for (auto& [term, list] : merged) {
        std::uint64_t cf = 0;
        for (const auto& p : list) cf += p.tf;
        idx.vocabulary_.push_back(term);
        idx.collection_freq_.push_back(cf);
        idx.postings_.push_back(std::move(list));
    }
    idx.rebuild_lookups();
    return idx;
}

// Layout: magic "QXIX", version byte, then three sections (vocabulary,
// postings, doc table), each prefixed by its u64 byte length.
void InvertedIndex::save(std::ostream& out) const {
    using namespace detail;
    out.write(kIndexMagic, 4);
    write_le<std::uint8_t>(out, kIndexVersion);

    auto section = [&out](auto&& fill) {
        std::ostringstream buf(std::ios::binary);
        fill(buf);
        const auto bytes = std::move(buf).str();
        write_le<std::uint64_t>(out, bytes.size());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };
    section([&](std::ostream& s) {
        write_le<std::uint32_t>(s, static_cast<std::uint32_t>(vocabulary_.size()));
        for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
            write_string(s, vocabulary_[i]);
            write_le<std::uint64_t>(s, collection_freq_[i]);
        }
    });
    section([&](std::ostream& s) {
        write_le<std::uint32_t>(s, static_cast<std::uint32_t>(postings_.size()));
        for (const auto& list : postings_) {
            write_le<std::uint32_t>(s, static_cast<std::uint32_t>(list.size()));
            for (const auto& p : list) {
                write_le<std::uint32_t>(s, p.doc);
                write_le<std::uint32_t>(s, p.tf);
            }
        }
    });
    section([&](std::ostream& s) {
        write_le<std::uint32_t>(s, static_cast<std::uint32_t>(doc_ids_.size()));
        for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
            write_string(s, doc_ids_[i]);
            write_le<std::uint32_t>(s, doc_lengths_[i]);
        }
    });
}

void InvertedIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    save(out);
    if (!out) throw std::runtime_error(fmt::format("write to '{}' failed", path.string()));
}

InvertedIndex InvertedIndex::load(std::istream& in) {
    using namespace detail;
    char magic[4];
    if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kIndexMagic)) {
        throw std::runtime_error("not an index file (bad magic)");
    }
    const auto version = read_le<std::uint8_t>(in);
    if (version != kIndexVersion) {
        throw std::runtime_error(fmt::format("unsupported index version {}", version));
    }
    auto section = [&in] {
        const auto n = read_le<std::uint64_t>(in);
        std::string bytes(n, '\0');
        if (n > 0 && !in.read(bytes.data(), static_cast<std::streamsize>(n))) {
            throw std::runtime_error("truncated index section");
        }
        return std::istringstream(std::move(bytes), std::ios::binary);
    };
    auto expect_consumed = [](std::istringstream& s, const char* name) {
        if (s.peek() != std::char_traits<char>::eof()) {
            throw std::runtime_error(fmt::format("trailing bytes in index {} section", name));
        }
    };

    InvertedIndex idx;
    {
        auto s = section();
        const auto n = read_le<std::uint32_t>(s);
        idx.vocabulary_.reserve(n);
        idx.collection_freq_.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            idx.vocabulary_.push_back(read_string(s));
            idx.collection_freq_.push_back(read_le<std::uint64_t>(s));
        }
        expect_consumed(s, "vocabulary");
    }
    {
        auto s = section();
        const auto n = read_le<std::uint32_t>(s);
        if (n != idx.vocabulary_.size()) throw std::runtime_error("postings/vocabulary size mismatch");
        idx.postings_.resize(n);
        for (auto& list : idx.postings_) {
            const auto m = read_le<std::uint32_t>(s);
            list.reserve(m);
            for (std::uint32_t j = 0; j < m; ++j) {
                const auto doc = read_le<std::uint32_t>(s);
                const auto tf = read_le<std::uint32_t>(s);
                list.push_back({doc, tf});
            }
        }
        expect_consumed(s, "postings");
    }
    {
        auto s = section();
        const auto n = read_le<std::uint32_t>(s);
        for (std::uint32_t i = 0; i < n; ++i) {
            idx.doc_ids_.push_back(read_string(s));
            idx.doc_lengths_.push_back(read_le<std::uint32_t>(s));
            idx.total_tokens_ += idx.doc_lengths_.back();
        }
        expect_consumed(s, "doc table");
    }
    for (const auto& list : idx.postings_) {
        for (const auto& p : list) {
            if (p.doc >= idx.doc_ids_.size()) throw std::runtime_error("posting references unknown document");
        }
    }
    idx.rebuild_lookups();
    return idx;
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open index '{}'", path.string()));
    return load(in);
}

}  // namespace qexp
