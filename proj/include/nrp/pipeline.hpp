#pragma once

// The evaluation procedure end to end: validate candidate rankers on the
// judged pools, inject each generated answer alone into its query's pool,
// record where it lands, and compare system and expert orderings of a
// sampled subset.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nrp/answers.hpp"
#include "nrp/corpus.hpp"
#include "nrp/metrics.hpp"
#include "nrp/ranking.hpp"
#include "nrp/scorer_protocol.hpp"

namespace nrp {

/// Named way to open scorer sessions. Each call of `open` yields an
/// independent session, so one can be handed to each worker.
struct ScorerSource {
    std::string name;
    std::function<std::unique_ptr<Scorer>()> open;
};

ScorerSource scorer_source(const ScorerSpec& spec, std::shared_ptr<const CollectionStats> stats,
                           ExternalOptions options = {});

/// Documents of the query's judged pool as rankable items.
/// Throws DataError when the query has no judged documents.
std::vector<PoolItem> pool_items(const Corpus& corpus, const std::string& query_id);

struct ValidationRow {
    std::string scorer;
    std::string dimension;
    double ndcg = 0.0;
    std::size_t queries = 0;
};

struct ValidationReport {
    std::vector<ValidationRow> rows;
    std::string winner;
    int k = 10;
    /// scorer name -> error message for scorers excluded after a failure.
    std::map<std::string, std::string> failures;

    /// Unweighted mean of a scorer's per-dimension nDCG.
    double mean_ndcg(const std::string& scorer) const;
};

/// Ranks every judged pool with every scorer and macro-averages nDCG@k per
/// dimension over the queries judged in that dimension. The winner has the
/// highest mean over dimensions; ties go to the higher relevance score,
/// then the lexically smaller name. Throws DataError when every scorer fails.
ValidationReport validate_rankers(std::span<const ScorerSource> scorers, const Corpus& corpus, int k = 10);

struct EvaluationOptions {
    /// Worker threads; 0 means one per available processor.
    unsigned workers = 0;
};

struct EvaluationResult {
    /// One record per evaluated answer, ordered by (query, model, prompt, sample).
    std::vector<NrpRecord> records;
    /// Document-only ranking of every pool that received an answer.
    std::map<std::string, Ranking> doc_rankings;
    std::size_t skipped = 0;
};

/// Injects each answer alone into its query's pool, ranks the pool and
/// records the answer's position. Answers for unknown or unjudged queries
/// are skipped with a warning; scorer failures abort the run.
EvaluationResult evaluate_answers(const ScorerSource& scorer, std::span<const GeneratedAnswer> answers,
                                  const Corpus& corpus, const EvaluationOptions& options = {});

struct StudyTopic {
    std::string query_id;
    /// One answer id per requested model, in the requested order, followed
    /// by the best-ranked relevant document.
    std::vector<std::string> items;
};

struct StudySampleOptions {
    std::size_t n_topics = 20;
    std::vector<std::string> models;
    /// Restrict to answers produced with this prompt; empty keeps all.
    std::string prompt_id;
    std::uint64_t seed = 0;
};

/// Picks topics for an expert study. Per topic: each model's highest-NRP
/// answer (lowest sample on ties) plus the top-ranked document whose
/// relevance grade is at least 1. Topics missing a model or a relevant
/// document are not eligible. Sampling is a seeded uniform draw without
/// replacement; the result is ordered by query id.
std::vector<StudyTopic> select_study_sample(std::span<const NrpRecord> records,
                                            const std::map<std::string, Ranking>& doc_rankings,
                                            const Corpus& corpus, const StudySampleOptions& options);

struct TopicRanking {
    std::string query_id;
    RankedList ranking;
};

/// Orders each study topic's items with the scorer, the system side of the
/// agreement comparison. Answer texts are looked up among `answers`
/// produced with `prompt_id` (any prompt when empty).
std::vector<TopicRanking> rank_study_topics(Scorer& scorer, std::span<const StudyTopic> topics,
                                            std::span<const GeneratedAnswer> answers, const Corpus& corpus,
                                            const std::string& prompt_id = {});

struct AgreementRow {
    std::string query_id;
    double rbo = 0.0;
    double kendall_tau = 0.0;
};

struct AgreementResult {
    std::vector<AgreementRow> rows;
    double mean_rbo = 0.0;
    double mean_tau = 0.0;
};

/// Per-topic RBO (p = 1) and Kendall's tau between system and expert
/// orderings, matched by query id, with arithmetic means.
AgreementResult agreement(std::span<const TopicRanking> system, std::span<const TopicRanking> expert);

/// Display label of a ranked item: the model for an injected answer,
/// "Document" otherwise.
std::string item_label(std::string_view item_id);

struct RankFlowRow {
    std::string source;
    std::string query_id;
    std::size_t position = 0;
    std::string item_id;
    std::string label;
};

/// Item and label at every rank position (1-based) of each topic, for both
/// sides of the comparison.
std::vector<RankFlowRow> rank_flow(std::span<const TopicRanking> system, std::span<const TopicRanking> expert);

}  // namespace nrp
