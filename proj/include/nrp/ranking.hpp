#pragma once

// Tokenization, collection statistics, the native lexical scorers and the
// pool ranking contract shared by every scorer backend.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nrp/corpus.hpp"

namespace nrp {

/// Lowercased alphanumeric runs. ASCII letters are folded to lowercase;
/// every ASCII character that is not a letter or digit separates tokens.
/// Non-ASCII code points are kept verbatim as token characters.
std::vector<std::string> tokenize(std::string_view text);

/// Term frequencies of one tokenized text.
struct TermCounts {
    std::unordered_map<std::string, std::int64_t> tf;
    std::int64_t length = 0;

    static TermCounts from_tokens(std::span<const std::string> tokens);
    static TermCounts from_text(std::string_view text) { return from_tokens(tokenize(text)); }

    std::int64_t count(const std::string& term) const {
        const auto it = tf.find(term);
        return it == tf.end() ? 0 : it->second;
    }
};

struct CollectionStats {
    std::int64_t doc_count = 0;
    double avg_doc_len = 0.0;
    std::int64_t total_tokens = 0;
    std::unordered_map<std::string, std::int64_t> doc_freq;
    std::unordered_map<std::string, std::int64_t> coll_term_freq;

    std::int64_t df(const std::string& term) const;
    std::int64_t ctf(const std::string& term) const;
};

/// Statistics over the document collection only; generated answers are
/// never added so that document scores do not move when an answer is
/// injected. Throws PreconditionError on an empty list.
CollectionStats build_stats(std::span<const Document> docs);

/// Sum over distinct query terms of tf * ln(1 + N/df). No length
/// normalization, so padding a document with non-query terms leaves the
/// score unchanged.
double score_tfidf(std::span<const std::string> query_tokens, std::span<const std::string> doc_tokens,
                   const CollectionStats& stats);
double score_tfidf(const TermCounts& query, const TermCounts& doc, const CollectionStats& stats);

/// Parameter-free DFR hypergeometric model (DPH).
///
/// Per distinct query term with tf > 0 in a document of length l:
///   f = min(tf/l, 1 - 1/(l+1))
///   w = qtf * (1-f)^2/(tf+1) * (tf*log2(tf*avgdl/l * N/ctf) + 0.5*log2(2*pi*tf*(1-f)))
/// Terms unseen in the collection are skipped and an empty document scores 0.
/// The clamp on f only bites when the term fills the whole document, where
/// the unclamped formula would evaluate 0 * log2(0).
double score_dph(std::span<const std::string> query_tokens, std::span<const std::string> doc_tokens,
                 const CollectionStats& stats);
double score_dph(const TermCounts& query, const TermCounts& doc, const CollectionStats& stats);

/// Prefix marking injected generated answers inside a ranked pool.
inline constexpr std::string_view kAnswerPrefix = "ANSWER::";

bool is_answer_id(std::string_view item_id);
std::string answer_item_id(std::string_view model, std::string_view query_id, std::int64_t sample);

struct RankEntry {
    std::string item_id;
    double score = 0.0;

    bool operator==(const RankEntry&) const = default;
};

struct Ranking {
    std::string query_id;
    std::vector<RankEntry> entries;

    /// 0-based position of an item, if present.
    std::optional<std::size_t> position_of(std::string_view item_id) const;
    std::vector<std::string> item_ids() const;
};

/// Strict weak order of the ranking contract: score descending, documents
/// before injected answers on equal score, then item id ascending.
bool ranks_before(const RankEntry& a, const RankEntry& b);

/// Sorts already-scored items into a Ranking. Throws PreconditionError on
/// duplicate ids, non-finite scores or an empty pool.
Ranking rank_scored(std::string query_id, std::vector<RankEntry> entries);

struct PoolItem {
    std::string id;
    std::string text;
};

struct ScoreItem {
    std::string_view id;
    std::string_view text;
};

/// A pointwise scorer: the score of an item depends only on the query and
/// that item's text.
class Scorer {
public:
    virtual ~Scorer() = default;

    virtual std::string name() const = 0;

    /// One finite score per item, aligned with `items`.
    virtual std::vector<double> score_batch(std::string_view query, std::span<const ScoreItem> items) = 0;

    /// Upper bound on concurrent connections the backend accepts, if any.
    virtual std::optional<int> max_connections() const { return std::nullopt; }
};

class TfidfScorer final : public Scorer {
public:
    explicit TfidfScorer(std::shared_ptr<const CollectionStats> stats) : stats_(std::move(stats)) {}

    std::string name() const override { return "tfidf"; }
    std::vector<double> score_batch(std::string_view query, std::span<const ScoreItem> items) override;

private:
    std::shared_ptr<const CollectionStats> stats_;
};

class DphScorer final : public Scorer {
public:
    explicit DphScorer(std::shared_ptr<const CollectionStats> stats) : stats_(std::move(stats)) {}

    std::string name() const override { return "dph"; }
    std::vector<double> score_batch(std::string_view query, std::span<const ScoreItem> items) override;

private:
    std::shared_ptr<const CollectionStats> stats_;
};

/// Deterministic stand-in for a neural scorer:
/// |distinct tokens shared by query and text| / (1 + number of text tokens).
double echo_score(std::string_view query, std::string_view text);

class EchoScorer final : public Scorer {
public:
    std::string name() const override { return "echo"; }
    std::vector<double> score_batch(std::string_view query, std::span<const ScoreItem> items) override;
};

/// Scores every item pointwise and sorts by the ranking contract.
Ranking rank_pool(Scorer& scorer, const Query& query, std::span<const PoolItem> items);

}  // namespace nrp
