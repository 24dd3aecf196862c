#pragma once

// Queries, documents and multi-dimensional judgments: loading, validation,
// HTML text extraction and per-query pool construction.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nrp {

struct Query {
    std::string id;
    std::string text;

    bool operator==(const Query&) const = default;
};

struct Document {
    std::string id;
    std::string text;
    std::optional<std::string> url;

    bool operator==(const Document&) const = default;
};

/// Quality dimension a judgment set grades. The three built-in dimensions
/// have fixed names; anything else is carried verbatim as a custom name.
class Dimension {
public:
    enum class Kind { relevance, readability, credibility, custom };

    static Dimension relevance() { return Dimension(Kind::relevance, "relevance"); }
    static Dimension readability() { return Dimension(Kind::readability, "readability"); }
    static Dimension credibility() { return Dimension(Kind::credibility, "credibility"); }
    static Dimension custom(std::string name);
    static Dimension from_name(std::string_view name);

    Kind kind() const noexcept { return kind_; }
    const std::string& name() const noexcept { return name_; }

    bool operator==(const Dimension&) const = default;

private:
    Dimension(Kind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

    Kind kind_;
    std::string name_;
};

/// query id -> doc id -> grade. Ordered maps keep every traversal deterministic.
using GradeMap = std::map<std::string, std::map<std::string, int>>;

struct JudgmentSet {
    Dimension dimension = Dimension::relevance();
    GradeMap grades;

    std::optional<int> grade(const std::string& query_id, const std::string& doc_id) const;
    /// Grades of one query; empty map when the query is not judged.
    const std::map<std::string, int>& grades_for(const std::string& query_id) const;
    std::size_t size() const;
};

struct DocumentPool {
    std::string query_id;
    std::vector<std::string> members;
};

/// Document store with id lookup. Insertion order is preserved.
class DocumentStore {
public:
    DocumentStore() = default;
    explicit DocumentStore(std::vector<Document> docs);

    const Document* find(const std::string& id) const;
    bool contains(const std::string& id) const { return find(id) != nullptr; }
    const std::vector<Document>& documents() const noexcept { return docs_; }
    std::size_t size() const noexcept { return docs_.size(); }

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Collected non-fatal issues. Every entry is also logged.
using Warnings = std::vector<std::string>;

/// `id<TAB>text` lines. Blank lines are skipped.
std::vector<Query> parse_queries(std::istream& in);
void write_queries(std::ostream& out, const std::vector<Query>& queries);

/// TREC 4-column qrels `qid iter docid grade`; the iteration column is ignored.
JudgmentSet parse_qrels(std::istream& in, const Dimension& dimension, Warnings* warnings = nullptr);

/// One `{"doc_id","text","url"?}` object per line.
std::vector<Document> parse_documents(std::istream& in);
void write_documents(std::ostream& out, const std::vector<Document>& docs);

/// Visible text of an HTML fragment or page.
std::string extract_text(std::string_view html);

/// Replaces invalid UTF-8 sequences with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

/// Number of Unicode scalar values in a UTF-8 string.
std::size_t count_chars(std::string_view utf8);

struct FilterResult {
    std::vector<Document> kept;
    std::size_t dropped = 0;
};

/// Keeps documents whose text has at least `min_chars` characters.
FilterResult filter_short_documents(std::vector<Document> docs, std::size_t min_chars = 50);

/// Union of doc ids graded for `query_id` in any dimension, sorted by id.
/// Throws DataError when nothing is judged for the query.
DocumentPool pool_for_query(const std::vector<JudgmentSet>& judgments, const std::string& query_id);

/// Drops judgments whose query or document is unknown, recording one
/// summary warning per dimension.
void join_judgments(std::vector<JudgmentSet>& judgments, const std::vector<Query>& queries,
                    const DocumentStore& docs, Warnings* warnings = nullptr);

struct Corpus {
    std::vector<Query> queries;
    DocumentStore docs;
    std::vector<JudgmentSet> judgments;

    const Query* find_query(const std::string& id) const;
    const JudgmentSet* judgments_for(const Dimension& dim) const;
};

struct CorpusPaths {
    std::filesystem::path queries;
    std::filesystem::path docs;
    /// Directory holding `qrels.<dimension>.txt` files.
    std::filesystem::path qrels_dir;
    bool extract_html = false;
    std::size_t min_chars = 50;
};

/// Loads queries, documents (optionally HTML-extracted, then length
/// filtered) and every qrels file in the directory, then joins them.
Corpus load_corpus(const CorpusPaths& paths, Warnings* warnings = nullptr);

}  // namespace nrp
