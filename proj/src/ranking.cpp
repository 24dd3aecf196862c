#include "nrp/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "nrp/error.hpp"

namespace nrp {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
            current.push_back(ch);
        } else if (c >= 'A' && c <= 'Z') {
            current.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

TermCounts TermCounts::from_tokens(std::span<const std::string> tokens) {
    TermCounts counts;
    counts.length = static_cast<std::int64_t>(tokens.size());
    for (const auto& t : tokens) ++counts.tf[t];
    return counts;
}

std::int64_t CollectionStats::df(const std::string& term) const {
    const auto it = doc_freq.find(term);
    return it == doc_freq.end() ? 0 : it->second;
}

std::int64_t CollectionStats::ctf(const std::string& term) const {
    const auto it = coll_term_freq.find(term);
    return it == coll_term_freq.end() ? 0 : it->second;
}

CollectionStats build_stats(std::span<const Document> docs) {
    if (docs.empty()) throw PreconditionError("build_stats: empty document list");
    CollectionStats stats;
    stats.doc_count = static_cast<std::int64_t>(docs.size());
    for (const auto& doc : docs) {
        const auto counts = TermCounts::from_text(doc.text);
        stats.total_tokens += counts.length;
        for (const auto& [term, tf] : counts.tf) {
            ++stats.doc_freq[term];
            stats.coll_term_freq[term] += tf;
        }
    }
    stats.avg_doc_len = static_cast<double>(stats.total_tokens) / static_cast<double>(stats.doc_count);
    return stats;
}

double score_tfidf(const TermCounts& query, const TermCounts& doc, const CollectionStats& stats) {
    if (stats.doc_count <= 0) throw PreconditionError("score_tfidf: empty collection");
    // Iterate query terms in sorted order so the floating-point sum does not
    // depend on hash-map layout.
    std::vector<const std::string*> terms;
    terms.reserve(query.tf.size());
    for (const auto& [term, qtf] : query.tf) terms.push_back(&term);
    std::sort(terms.begin(), terms.end(), [](const auto* a, const auto* b) { return *a < *b; });

    const auto n = static_cast<double>(stats.doc_count);
    double score = 0.0;
    for (const auto* term : terms) {
        const auto tf = doc.count(*term);
        const auto df = stats.df(*term);
        if (tf == 0 || df == 0) continue;
        score += static_cast<double>(tf) * std::log(1.0 + n / static_cast<double>(df));
    }
    return score;
}

double score_tfidf(std::span<const std::string> query_tokens, std::span<const std::string> doc_tokens,
                   const CollectionStats& stats) {
    return score_tfidf(TermCounts::from_tokens(query_tokens), TermCounts::from_tokens(doc_tokens), stats);
}

double score_dph(const TermCounts& query, const TermCounts& doc, const CollectionStats& stats) {
    if (stats.doc_count <= 0) throw PreconditionError("score_dph: empty collection");
    if (doc.length == 0) return 0.0;

    std::vector<std::pair<const std::string*, std::int64_t>> terms;
    terms.reserve(query.tf.size());
    for (const auto& [term, qtf] : query.tf) terms.emplace_back(&term, qtf);
    std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) { return *a.first < *b.first; });

    const auto l = static_cast<double>(doc.length);
    const auto n = static_cast<double>(stats.doc_count);
    const double f_max = 1.0 - 1.0 / (l + 1.0);
    double score = 0.0;
    for (const auto& [term, qtf] : terms) {
        const auto tf_count = doc.count(*term);
        const auto ctf = stats.ctf(*term);
        if (tf_count == 0 || ctf == 0) continue;
        const auto tf = static_cast<double>(tf_count);
        const double f = std::min(tf / l, f_max);
        const double norm = (1.0 - f) * (1.0 - f) / (tf + 1.0);
        const double info = tf * std::log2((tf * stats.avg_doc_len / l) * (n / static_cast<double>(ctf))) +
                            0.5 * std::log2(2.0 * std::numbers::pi * tf * (1.0 - f));
        score += static_cast<double>(qtf) * norm * info;
    }
    return score;
}

double score_dph(std::span<const std::string> query_tokens, std::span<const std::string> doc_tokens,
                 const CollectionStats& stats) {
    return score_dph(TermCounts::from_tokens(query_tokens), TermCounts::from_tokens(doc_tokens), stats);
}

bool is_answer_id(std::string_view item_id) { return item_id.starts_with(kAnswerPrefix); }

std::string answer_item_id(std::string_view model, std::string_view query_id, std::int64_t sample) {
    std::string id(kAnswerPrefix);
    id.append(model).append("::").append(query_id).append("::").append(std::to_string(sample));
    return id;
}

std::optional<std::size_t> Ranking::position_of(std::string_view item_id) const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].item_id == item_id) return i;
    }
    return std::nullopt;
}

std::vector<std::string> Ranking::item_ids() const {
    std::vector<std::string> ids;
    ids.reserve(entries.size());
    for (const auto& e : entries) ids.push_back(e.item_id);
    return ids;
}

bool ranks_before(const RankEntry& a, const RankEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    const bool a_answer = is_answer_id(a.item_id);
    const bool b_answer = is_answer_id(b.item_id);
    if (a_answer != b_answer) return !a_answer;
    return a.item_id < b.item_id;
}

Ranking rank_scored(std::string query_id, std::vector<RankEntry> entries) {
    if (entries.empty()) throw PreconditionError("cannot rank an empty pool for query " + query_id);
    for (const auto& e : entries) {
        if (!std::isfinite(e.score)) {
            throw PreconditionError("non-finite score for item " + e.item_id + " in query " + query_id);
        }
    }
    std::sort(entries.begin(), entries.end(), ranks_before);
    const auto dup = std::adjacent_find(entries.begin(), entries.end(),
                                        [](const auto& a, const auto& b) { return a.item_id == b.item_id; });
    if (dup != entries.end()) {
        throw PreconditionError("duplicate item " + dup->item_id + " in pool for query " + query_id);
    }
    return Ranking{std::move(query_id), std::move(entries)};
}

std::vector<double> TfidfScorer::score_batch(std::string_view query, std::span<const ScoreItem> items) {
    const auto q = TermCounts::from_text(query);
    std::vector<double> scores;
    scores.reserve(items.size());
    for (const auto& item : items) scores.push_back(score_tfidf(q, TermCounts::from_text(item.text), *stats_));
    return scores;
}

std::vector<double> DphScorer::score_batch(std::string_view query, std::span<const ScoreItem> items) {
    const auto q = TermCounts::from_text(query);
    std::vector<double> scores;
    scores.reserve(items.size());
    for (const auto& item : items) scores.push_back(score_dph(q, TermCounts::from_text(item.text), *stats_));
    return scores;
}

double echo_score(std::string_view query, std::string_view text) {
    const auto q = tokenize(query);
    const auto t = tokenize(text);
    const std::unordered_set<std::string> query_terms(q.begin(), q.end());
    std::unordered_set<std::string> shared;
    for (const auto& tok : t) {
        if (query_terms.contains(tok)) shared.insert(tok);
    }
    return static_cast<double>(shared.size()) / (1.0 + static_cast<double>(t.size()));
}

std::vector<double> EchoScorer::score_batch(std::string_view query, std::span<const ScoreItem> items) {
    std::vector<double> scores;
    scores.reserve(items.size());
    for (const auto& item : items) scores.push_back(echo_score(query, item.text));
    return scores;
}

Ranking rank_pool(Scorer& scorer, const Query& query, std::span<const PoolItem> items) {
    if (items.empty()) throw PreconditionError("rank_pool: empty pool for query " + query.id);
    std::vector<ScoreItem> batch;
    batch.reserve(items.size());
    for (const auto& item : items) batch.push_back(ScoreItem{item.id, item.text});
    const auto scores = scorer.score_batch(query.text, batch);
    if (scores.size() != items.size()) {
        throw ScorerError("scorer " + scorer.name() + " returned " + std::to_string(scores.size()) +
                          " scores for " + std::to_string(items.size()) + " items");
    }
    std::vector<RankEntry> entries;
    entries.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) entries.push_back(RankEntry{items[i].id, scores[i]});
    return rank_scored(query.id, std::move(entries));
}

}  // namespace nrp
