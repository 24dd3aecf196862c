#include "nrp/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <limits>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nrp/error.hpp"

namespace nrp {

namespace {

void note(Warnings* warnings, std::string msg) {
    spdlog::warn("{}", msg);
    if (warnings != nullptr) warnings->push_back(std::move(msg));
}

std::string_view trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n\f\v";
    const auto first = s.find_first_not_of(ws);
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(ws);
    return s.substr(first, last - first + 1);
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        const std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool iequals_prefix(std::string_view hay, std::size_t pos, std::string_view needle) {
    if (pos + needle.size() > hay.size()) return false;
    for (std::size_t i = 0; i < needle.size(); ++i) {
        if (ascii_lower(hay[pos + i]) != needle[i]) return false;
    }
    return true;
}

std::size_t ifind(std::string_view hay, std::string_view lower_needle, std::size_t from) {
    for (std::size_t i = from; i + lower_needle.size() <= hay.size(); ++i) {
        if (iequals_prefix(hay, i, lower_needle)) return i;
    }
    return std::string_view::npos;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Length of the valid UTF-8 sequence starting at s[i], or 0 if invalid.
std::size_t utf8_sequence_length(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) return 1;
    std::size_t len = 0;
    char32_t min_cp = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2; min_cp = 0x80; cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3; min_cp = 0x800; cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4; min_cp = 0x10000; cp = b0 & 0x07;
    } else {
        return 0;
    }
    if (i + len > s.size()) return 0;
    for (std::size_t k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) return 0;
        cp = (cp << 6) | (b & 0x3F);
    }
    if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
    return len;
}

// Elements whose boundaries separate words when the tag is dropped.
bool is_block_tag(std::string_view name) {
    static const std::set<std::string_view> block = {
        "address", "article", "aside", "blockquote", "body", "br", "caption", "dd", "details",
        "dialog", "div", "dl", "dt", "fieldset", "figcaption", "figure", "footer", "form", "h1",
        "h2", "h3", "h4", "h5", "h6", "head", "header", "hr", "html", "img", "input", "li",
        "main", "nav", "ol", "option", "p", "pre", "section", "select", "summary", "table",
        "tbody", "td", "textarea", "tfoot", "th", "thead", "title", "tr", "ul"};
    return block.contains(name);
}

bool is_tag_name_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
           c == ':';
}

// Position just past the '>' closing a tag that opened at `lt`, honouring
// quoted attribute values. npos when the tag never closes.
std::size_t tag_end(std::string_view html, std::size_t lt) {
    char quote = 0;
    for (std::size_t i = lt + 1; i < html.size(); ++i) {
        const char c = html[i];
        if (quote != 0) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '>') {
            return i + 1;
        }
    }
    return std::string_view::npos;
}

// Decodes the entity starting at html[amp] == '&'. Returns consumed length
// (0 when the text is not a recognised entity).
std::size_t decode_entity(std::string_view html, std::size_t amp, std::string& out) {
    const std::size_t semi = html.find(';', amp + 1);
    if (semi == std::string_view::npos || semi - amp > 12) return 0;
    const std::string_view body = html.substr(amp + 1, semi - amp - 1);
    if (body.empty()) return 0;
    if (body[0] == '#') {
        std::string_view digits = body.substr(1);
        int base = 10;
        if (!digits.empty() && (digits[0] == 'x' || digits[0] == 'X')) {
            base = 16;
            digits.remove_prefix(1);
        }
        if (digits.empty()) return 0;
        std::uint32_t cp = 0;
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), cp, base);
        if (ec != std::errc{} || ptr != digits.data() + digits.size()) return 0;
        append_utf8(out, cp == 0 ? char32_t{0xFFFD} : static_cast<char32_t>(cp));
        return semi - amp + 1;
    }
    static const std::array<std::pair<std::string_view, std::string_view>, 6> named = {{
        {"amp", "&"}, {"lt", "<"}, {"gt", ">"}, {"quot", "\""}, {"apos", "'"}, {"nbsp", " "}}};
    for (const auto& [name, text] : named) {
        if (body == name) {
            out += text;
            return semi - amp + 1;
        }
    }
    return 0;
}

bool is_space_byte(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        bool space = is_space_byte(s[i]);
        std::size_t width = 1;
        // U+00A0 NO-BREAK SPACE
        if (!space && static_cast<unsigned char>(s[i]) == 0xC2 && i + 1 < s.size() &&
            static_cast<unsigned char>(s[i + 1]) == 0xA0) {
            space = true;
            width = 2;
        }
        if (space) {
            pending_space = true;
            i += width - 1;
            continue;
        }
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.push_back(s[i]);
    }
    return out;
}

}  // namespace

Dimension Dimension::custom(std::string name) {
    if (name.empty()) throw PreconditionError("dimension name must not be empty");
    return Dimension(Kind::custom, std::move(name));
}

Dimension Dimension::from_name(std::string_view name) {
    if (name == "relevance") return relevance();
    if (name == "readability") return readability();
    if (name == "credibility") return credibility();
    return custom(std::string(name));
}

std::optional<int> JudgmentSet::grade(const std::string& query_id, const std::string& doc_id) const {
    const auto q = grades.find(query_id);
    if (q == grades.end()) return std::nullopt;
    const auto d = q->second.find(doc_id);
    if (d == q->second.end()) return std::nullopt;
    return d->second;
}

const std::map<std::string, int>& JudgmentSet::grades_for(const std::string& query_id) const {
    static const std::map<std::string, int> empty;
    const auto q = grades.find(query_id);
    return q == grades.end() ? empty : q->second;
}

std::size_t JudgmentSet::size() const {
    std::size_t n = 0;
    for (const auto& [q, docs] : grades) n += docs.size();
    return n;
}

DocumentStore::DocumentStore(std::vector<Document> docs) : docs_(std::move(docs)) {
    index_.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        if (!index_.emplace(docs_[i].id, i).second) {
            throw DataError("duplicate document id " + docs_[i].id);
        }
    }
}

const Document* DocumentStore::find(const std::string& id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : &docs_[it->second];
}

std::vector<Query> parse_queries(std::istream& in) {
    std::vector<Query> out;
    std::set<std::string, std::less<>> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (is_blank(line)) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw DataError("queries line " + std::to_string(lineno) + ": expected id<TAB>text");
        }
        const std::string_view id = trim(std::string_view(line).substr(0, tab));
        const std::string_view text = trim(std::string_view(line).substr(tab + 1));
        if (id.empty()) throw DataError("queries line " + std::to_string(lineno) + ": empty query id");
        if (text.empty()) {
            throw DataError("queries line " + std::to_string(lineno) + ": empty text for query " +
                            std::string(id));
        }
        if (!seen.emplace(id).second) {
            throw DataError("duplicate query id " + std::string(id) + " at line " +
                            std::to_string(lineno));
        }
        out.push_back(Query{std::string(id), std::string(text)});
    }
    return out;
}

void write_queries(std::ostream& out, const std::vector<Query>& queries) {
    for (const auto& q : queries) out << q.id << '\t' << q.text << '\n';
}

JudgmentSet parse_qrels(std::istream& in, const Dimension& dimension, Warnings* warnings) {
    JudgmentSet set;
    set.dimension = dimension;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (is_blank(line)) continue;
        const auto cols = split_ws(line);
        const auto where = "qrels (" + dimension.name() + ") line " + std::to_string(lineno);
        if (cols.size() != 4) throw DataError(where + ": expected 4 columns, got " + std::to_string(cols.size()));
        const std::string_view grade_text = cols[3];
        long long grade = 0;
        const auto [ptr, ec] =
            std::from_chars(grade_text.data(), grade_text.data() + grade_text.size(), grade);
        if (ec != std::errc{} || ptr != grade_text.data() + grade_text.size()) {
            throw DataError(where + ": grade '" + std::string(grade_text) + "' is not an integer");
        }
        if (grade < 0) throw DataError(where + ": negative grade " + std::string(grade_text));
        if (grade > std::numeric_limits<int>::max()) throw DataError(where + ": grade out of range");

        auto& slot = set.grades[std::string(cols[0])];
        const auto [it, inserted] = slot.insert_or_assign(std::string(cols[2]), static_cast<int>(grade));
        if (!inserted) {
            note(warnings, where + ": duplicate judgment for (" + std::string(cols[0]) + ", " +
                               std::string(cols[2]) + "), keeping grade " + std::string(grade_text));
        }
    }
    return set;
}

std::vector<Document> parse_documents(std::istream& in) {
    std::vector<Document> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (is_blank(line)) continue;
        const auto where = "docs line " + std::to_string(lineno);
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(where + ": invalid JSON: " + e.what());
        }
        if (!obj.is_object() || !obj.contains("doc_id") || !obj["doc_id"].is_string() ||
            !obj.contains("text") || !obj["text"].is_string()) {
            throw DataError(where + ": expected object with string fields doc_id and text");
        }
        Document doc{obj["doc_id"].get<std::string>(), obj["text"].get<std::string>(), std::nullopt};
        if (doc.id.empty()) throw DataError(where + ": empty doc_id");
        if (const auto url = obj.find("url"); url != obj.end() && !url->is_null()) {
            if (!url->is_string()) throw DataError(where + ": url must be a string");
            doc.url = url->get<std::string>();
        }
        out.push_back(std::move(doc));
    }
    return out;
}

void write_documents(std::ostream& out, const std::vector<Document>& docs) {
    for (const auto& d : docs) {
        nlohmann::json obj = {{"doc_id", d.id}, {"text", d.text}};
        if (d.url) obj["url"] = *d.url;
        out << obj.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    }
}

std::string sanitize_utf8(std::string_view bytes) {
    std::string out;
    out.reserve(bytes.size());
    std::size_t i = 0;
    while (i < bytes.size()) {
        const std::size_t len = utf8_sequence_length(bytes, i);
        if (len == 0) {
            append_utf8(out, 0xFFFD);
            ++i;
        } else {
            out.append(bytes.substr(i, len));
            i += len;
        }
    }
    return out;
}

std::size_t count_chars(std::string_view utf8) {
    return static_cast<std::size_t>(std::count_if(utf8.begin(), utf8.end(), [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
    }));
}

std::string extract_text(std::string_view raw) {
    const std::string clean = sanitize_utf8(raw);
    const std::string_view html = clean;
    std::string text;
    text.reserve(html.size());

    std::size_t i = 0;
    while (i < html.size()) {
        const char c = html[i];
        if (c == '&') {
            const std::size_t used = decode_entity(html, i, text);
            if (used > 0) {
                i += used;
            } else {
                text.push_back('&');
                ++i;
            }
            continue;
        }
        if (c != '<') {
            text.push_back(c);
            ++i;
            continue;
        }

        if (html.compare(i, 4, "<!--") == 0) {
            const std::size_t close = html.find("-->", i + 4);
            i = close == std::string_view::npos ? html.size() : close + 3;
            text.push_back(' ');
            continue;
        }

        const std::size_t next = i + 1;
        const bool closing = next < html.size() && html[next] == '/';
        const std::size_t name_start = closing ? next + 1 : next;
        const bool markup = name_start < html.size() &&
                            (std::isalpha(static_cast<unsigned char>(html[name_start])) != 0 ||
                             (!closing && (html[name_start] == '!' || html[name_start] == '?')));
        if (!markup) {
            // A bare '<' in text, e.g. "a < b".
            text.push_back('<');
            ++i;
            continue;
        }

        std::size_t name_end = name_start;
        while (name_end < html.size() && is_tag_name_char(html[name_end])) ++name_end;
        std::string name(html.substr(name_start, name_end - name_start));
        std::transform(name.begin(), name.end(), name.begin(), ascii_lower);

        const std::size_t end = tag_end(html, i);
        if (end == std::string_view::npos) {
            // Unterminated tag: drop the remainder.
            break;
        }
        const bool self_closing = end >= 2 && html[end - 2] == '/';
        i = end;

        if (!closing && !self_closing && (name == "script" || name == "style")) {
            const std::string close_tag = "</" + name;
            const std::size_t close = ifind(html, close_tag, i);
            if (close == std::string_view::npos) {
                i = html.size();
            } else {
                const std::size_t after = tag_end(html, close);
                i = after == std::string_view::npos ? html.size() : after;
            }
            text.push_back(' ');
            continue;
        }
        if (is_block_tag(name)) text.push_back(' ');
    }
    return collapse_whitespace(text);
}

FilterResult filter_short_documents(std::vector<Document> docs, std::size_t min_chars) {
    FilterResult result;
    result.kept.reserve(docs.size());
    for (auto& d : docs) {
        if (count_chars(d.text) >= min_chars) {
            result.kept.push_back(std::move(d));
        } else {
            ++result.dropped;
        }
    }
    return result;
}

DocumentPool pool_for_query(const std::vector<JudgmentSet>& judgments, const std::string& query_id) {
    std::set<std::string> members;
    for (const auto& set : judgments) {
        for (const auto& [doc_id, grade] : set.grades_for(query_id)) members.insert(doc_id);
    }
    if (members.empty()) throw DataError("query has no judged documents: " + query_id);
    return DocumentPool{query_id, {members.begin(), members.end()}};
}

void join_judgments(std::vector<JudgmentSet>& judgments, const std::vector<Query>& queries,
                    const DocumentStore& docs, Warnings* warnings) {
    std::set<std::string, std::less<>> query_ids;
    for (const auto& q : queries) query_ids.insert(q.id);
    for (auto& set : judgments) {
        std::size_t unknown_query = 0;
        std::size_t unknown_doc = 0;
        for (auto q = set.grades.begin(); q != set.grades.end();) {
            if (!query_ids.contains(q->first)) {
                unknown_query += q->second.size();
                q = set.grades.erase(q);
                continue;
            }
            std::erase_if(q->second, [&](const auto& kv) {
                const bool missing = !docs.contains(kv.first);
                unknown_doc += missing ? 1 : 0;
                return missing;
            });
            q = q->second.empty() ? set.grades.erase(q) : std::next(q);
        }
        if (unknown_query > 0 || unknown_doc > 0) {
            note(warnings, "qrels (" + set.dimension.name() + "): dropped " +
                               std::to_string(unknown_query) + " judgments for unknown queries and " +
                               std::to_string(unknown_doc) + " for documents not in the store");
        }
    }
}

const Query* Corpus::find_query(const std::string& id) const {
    const auto it = std::find_if(queries.begin(), queries.end(), [&](const Query& q) { return q.id == id; });
    return it == queries.end() ? nullptr : &*it;
}

const JudgmentSet* Corpus::judgments_for(const Dimension& dim) const {
    const auto it = std::find_if(judgments.begin(), judgments.end(),
                                 [&](const JudgmentSet& s) { return s.dimension == dim; });
    return it == judgments.end() ? nullptr : &*it;
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

}  // namespace

Corpus load_corpus(const CorpusPaths& paths, Warnings* warnings) {
    Corpus corpus;
    {
        auto in = open_input(paths.queries);
        corpus.queries = parse_queries(in);
    }

    std::vector<Document> docs;
    {
        auto in = open_input(paths.docs);
        docs = parse_documents(in);
    }
    for (auto& d : docs) d.text = paths.extract_html ? extract_text(d.text) : sanitize_utf8(d.text);
    auto filtered = filter_short_documents(std::move(docs), paths.min_chars);
    if (filtered.dropped > 0) {
        spdlog::info("dropped {} documents shorter than {} characters", filtered.dropped, paths.min_chars);
    }
    corpus.docs = DocumentStore(std::move(filtered.kept));

    if (!std::filesystem::is_directory(paths.qrels_dir)) {
        throw DataError("qrels directory not found: " + paths.qrels_dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(paths.qrels_dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.starts_with("qrels.") && name.ends_with(".txt") &&
            name.size() > 10) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no qrels.<dimension>.txt files in " + paths.qrels_dir.string());
    for (const auto& file : files) {
        const auto name = file.filename().string();
        const auto dim = Dimension::from_name(name.substr(6, name.size() - 10));
        auto in = open_input(file);
        corpus.judgments.push_back(parse_qrels(in, dim, warnings));
    }
    join_judgments(corpus.judgments, corpus.queries, corpus.docs, warnings);
    return corpus;
}

}  // namespace nrp
