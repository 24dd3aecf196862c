#include "nrp/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <random>
#include <set>
#include <thread>
#include <tuple>

#include <spdlog/spdlog.h>

#include "nrp/error.hpp"

namespace nrp {

ScorerSource scorer_source(const ScorerSpec& spec, std::shared_ptr<const CollectionStats> stats,
                           ExternalOptions options) {
    return ScorerSource{spec.to_string(), [spec, stats = std::move(stats), options] {
                            return make_scorer(spec, stats, options);
                        }};
}

std::vector<PoolItem> pool_items(const Corpus& corpus, const std::string& query_id) {
    const auto pool = pool_for_query(corpus.judgments, query_id);
    std::vector<PoolItem> items;
    items.reserve(pool.members.size());
    for (const auto& id : pool.members) {
        if (is_answer_id(id)) throw DataError("document id " + id + " uses the reserved answer prefix");
        const Document* doc = corpus.docs.find(id);
        if (doc == nullptr) throw DataError("judged document " + id + " is not in the document store");
        items.push_back(PoolItem{doc->id, doc->text});
    }
    return items;
}

double ValidationReport::mean_ndcg(const std::string& scorer) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& row : rows) {
        if (row.scorer != scorer) continue;
        sum += row.ndcg;
        ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

namespace {

struct JudgedPool {
    const Query* query;
    std::vector<PoolItem> items;
};

std::vector<JudgedPool> judged_pools(const Corpus& corpus) {
    std::vector<JudgedPool> pools;
    for (const auto& q : corpus.queries) {
        try {
            pools.push_back(JudgedPool{&q, pool_items(corpus, q.id)});
        } catch (const DataError& e) {
            spdlog::warn("skipping query {}: {}", q.id, e.what());
        }
    }
    return pools;
}

}  // namespace

ValidationReport validate_rankers(std::span<const ScorerSource> scorers, const Corpus& corpus, int k) {
    if (scorers.empty()) throw PreconditionError("validate_rankers: no scorers given");
    if (corpus.judgments.empty()) throw PreconditionError("validate_rankers: no judgment dimensions");
    if (k < 1) throw PreconditionError("validate_rankers: k must be >= 1");

    const auto pools = judged_pools(corpus);
    ValidationReport report;
    report.k = k;
    std::vector<std::string> succeeded;

    for (const auto& source : scorers) {
        std::vector<ValidationRow> rows;
        try {
            const auto scorer = source.open();
            std::vector<double> sums(corpus.judgments.size(), 0.0);
            std::vector<std::size_t> counts(corpus.judgments.size(), 0);
            for (const auto& pool : pools) {
                const auto ranking = rank_pool(*scorer, *pool.query, pool.items);
                for (std::size_t d = 0; d < corpus.judgments.size(); ++d) {
                    const auto& grades = corpus.judgments[d].grades_for(pool.query->id);
                    if (grades.empty()) continue;
                    sums[d] += ndcg_at_k(ranking, grades, k);
                    ++counts[d];
                }
            }
            for (std::size_t d = 0; d < corpus.judgments.size(); ++d) {
                const double mean = counts[d] == 0 ? 0.0 : sums[d] / static_cast<double>(counts[d]);
                rows.push_back(ValidationRow{source.name, corpus.judgments[d].dimension.name(), mean, counts[d]});
            }
        } catch (const std::exception& e) {
            spdlog::error("scorer {} failed during validation and is excluded: {}", source.name, e.what());
            report.failures[source.name] = e.what();
            continue;
        }
        report.rows.insert(report.rows.end(), rows.begin(), rows.end());
        succeeded.push_back(source.name);
    }
    if (succeeded.empty()) throw DataError("every scorer failed during validation");

    auto relevance_of = [&](const std::string& name) {
        for (const auto& row : report.rows) {
            if (row.scorer == name && row.dimension == Dimension::relevance().name()) return row.ndcg;
        }
        return 0.0;
    };
    report.winner = *std::min_element(succeeded.begin(), succeeded.end(), [&](const auto& a, const auto& b) {
        const double ma = report.mean_ndcg(a);
        const double mb = report.mean_ndcg(b);
        if (ma != mb) return ma > mb;
        const double ra = relevance_of(a);
        const double rb = relevance_of(b);
        if (ra != rb) return ra > rb;
        return a < b;
    });
    return report;
}

namespace {

struct QueryTask {
    const Query* query = nullptr;
    std::vector<PoolItem> items;
    std::vector<const GeneratedAnswer*> answers;
};

struct QueryResult {
    std::vector<NrpRecord> records;
    Ranking doc_ranking;
};

QueryResult evaluate_query(Scorer& scorer, const QueryTask& task) {
    const auto& qid = task.query->id;
    std::vector<ScoreItem> batch;
    batch.reserve(task.items.size());
    for (const auto& item : task.items) batch.push_back(ScoreItem{item.id, item.text});
    const auto doc_scores = scorer.score_batch(task.query->text, batch);
    if (doc_scores.size() != batch.size()) throw ScorerError("scorer returned a short score list");

    std::vector<RankEntry> doc_entries;
    doc_entries.reserve(task.items.size() + 1);
    for (std::size_t i = 0; i < task.items.size(); ++i) doc_entries.push_back(RankEntry{task.items[i].id, doc_scores[i]});

    // Answers are scored together for throughput but ranked one at a time;
    // scorers are pointwise, so this equals scoring each injected pool.
    std::vector<std::string> wire_ids;
    wire_ids.reserve(task.answers.size());
    batch.clear();
    for (const auto* a : task.answers) {
        wire_ids.push_back(answer_item_id(a->model, qid, a->sample) + "::" + a->prompt_id);
    }
    for (std::size_t i = 0; i < task.answers.size(); ++i) batch.push_back(ScoreItem{wire_ids[i], task.answers[i]->text});
    const auto answer_scores = scorer.score_batch(task.query->text, batch);
    if (answer_scores.size() != batch.size()) throw ScorerError("scorer returned a short score list");

    QueryResult result;
    result.records.reserve(task.answers.size());
    for (std::size_t i = 0; i < task.answers.size(); ++i) {
        const auto& a = *task.answers[i];
        const auto answer_id = answer_item_id(a.model, qid, a.sample);
        auto entries = doc_entries;
        entries.push_back(RankEntry{answer_id, answer_scores[i]});
        const auto ranking = rank_scored(qid, std::move(entries));
        const auto rank = ranking.position_of(answer_id);
        result.records.push_back(make_record(qid, a.model, a.prompt_id, a.sample, static_cast<std::int64_t>(*rank),
                                             static_cast<std::int64_t>(ranking.entries.size())));
    }
    result.doc_ranking = rank_scored(qid, std::move(doc_entries));
    return result;
}

}  // namespace

EvaluationResult evaluate_answers(const ScorerSource& source, std::span<const GeneratedAnswer> answers,
                                  const Corpus& corpus, const EvaluationOptions& options) {
    EvaluationResult out;

    std::map<std::string, std::vector<const GeneratedAnswer*>> by_query;
    std::set<std::tuple<std::string_view, std::string_view, std::string_view, std::int64_t>> keys;
    for (const auto& a : answers) {
        if (!keys.emplace(a.query_id, a.model, a.prompt_id, a.sample).second) {
            throw DataError("duplicate answer for query " + a.query_id + ", model " + a.model + ", prompt " +
                            a.prompt_id + ", sample " + std::to_string(a.sample));
        }
        by_query[a.query_id].push_back(&a);
    }

    std::vector<QueryTask> tasks;
    for (auto& [qid, group] : by_query) {
        const Query* query = corpus.find_query(qid);
        if (query == nullptr) {
            spdlog::warn("skipping {} answers for unknown query {}", group.size(), qid);
            out.skipped += group.size();
            continue;
        }
        std::vector<PoolItem> items;
        try {
            items = pool_items(corpus, qid);
        } catch (const DataError& e) {
            spdlog::warn("skipping {} answers for query {}: {}", group.size(), qid, e.what());
            out.skipped += group.size();
            continue;
        }
        tasks.push_back(QueryTask{query, std::move(items), std::move(group)});
    }
    if (tasks.empty()) return out;

    std::vector<std::unique_ptr<Scorer>> sessions;
    sessions.push_back(source.open());
    unsigned workers = options.workers != 0 ? options.workers : std::max(1u, std::thread::hardware_concurrency());
    if (const auto cap = sessions.front()->max_connections()) workers = std::min(workers, static_cast<unsigned>(*cap));
    workers = std::min<unsigned>(workers, static_cast<unsigned>(tasks.size()));
    while (sessions.size() < workers) sessions.push_back(source.open());

    std::vector<QueryResult> results(tasks.size());
    std::vector<std::exception_ptr> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    auto work = [&](Scorer& scorer) {
        for (std::size_t i = next++; i < tasks.size() && !failed; i = next++) {
            try {
                results[i] = evaluate_query(scorer, tasks[i]);
            } catch (...) {
                errors[i] = std::current_exception();
                failed = true;
            }
        }
    };
    if (workers == 1) {
        work(*sessions.front());
    } else {
        std::vector<std::jthread> threads;
        threads.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, std::ref(*sessions[w]));
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        auto& r = results[i];
        out.records.insert(out.records.end(), std::make_move_iterator(r.records.begin()),
                           std::make_move_iterator(r.records.end()));
        out.doc_rankings.emplace(tasks[i].query->id, std::move(r.doc_ranking));
    }
    std::sort(out.records.begin(), out.records.end(), record_key_less);
    return out;
}

namespace {

// Unbiased integer in [0, bound) by rejection on raw 64-bit draws, so the
// sample depends only on the seed and not on library distribution code.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    for (;;) {
        const std::uint64_t x = rng();
        if (x < limit) return x % bound;
    }
}

}  // namespace

std::vector<StudyTopic> select_study_sample(std::span<const NrpRecord> records,
                                            const std::map<std::string, Ranking>& doc_rankings,
                                            const Corpus& corpus, const StudySampleOptions& options) {
    if (options.models.empty()) throw PreconditionError("select_study_sample: no models given");
    const JudgmentSet* relevance = corpus.judgments_for(Dimension::relevance());
    if (relevance == nullptr) throw DataError("study sampling needs relevance judgments");

    // (query, model) -> best record
    std::map<std::pair<std::string, std::string>, const NrpRecord*> best;
    for (const auto& r : records) {
        if (!options.prompt_id.empty() && r.prompt_id != options.prompt_id) continue;
        auto& slot = best[{r.query_id, r.model}];
        if (slot == nullptr || r.nrp > slot->nrp || (r.nrp == slot->nrp && r.sample < slot->sample)) {
            slot = &r;
        } else if (r.nrp == slot->nrp && r.sample == slot->sample) {
            throw DataError("answers of model " + r.model + " for query " + r.query_id +
                            " come from several prompts; choose one prompt for the study");
        }
    }

    std::vector<StudyTopic> eligible;
    for (const auto& [qid, ranking] : doc_rankings) {
        StudyTopic topic{qid, {}};
        bool complete = true;
        for (const auto& model : options.models) {
            const auto it = best.find({qid, model});
            if (it == best.end()) {
                complete = false;
                break;
            }
            topic.items.push_back(answer_item_id(model, qid, it->second->sample));
        }
        if (!complete) continue;
        const auto& grades = relevance->grades_for(qid);
        const auto doc = std::find_if(ranking.entries.begin(), ranking.entries.end(), [&](const RankEntry& e) {
            const auto g = grades.find(e.item_id);
            return !is_answer_id(e.item_id) && g != grades.end() && g->second >= 1;
        });
        if (doc == ranking.entries.end()) continue;
        topic.items.push_back(doc->item_id);
        eligible.push_back(std::move(topic));
    }
    if (eligible.size() < options.n_topics) {
        throw DataError("only " + std::to_string(eligible.size()) + " topics have answers from every model and a " +
                        "relevant document; " + std::to_string(options.n_topics) + " requested");
    }

    std::mt19937_64 rng(options.seed);
    for (std::size_t i = 0; i < options.n_topics; ++i) {
        const auto j = i + static_cast<std::size_t>(draw_below(rng, eligible.size() - i));
        std::swap(eligible[i], eligible[j]);
    }
    eligible.resize(options.n_topics);
    std::sort(eligible.begin(), eligible.end(), [](const auto& a, const auto& b) { return a.query_id < b.query_id; });
    return eligible;
}

std::vector<TopicRanking> rank_study_topics(Scorer& scorer, std::span<const StudyTopic> topics,
                                            std::span<const GeneratedAnswer> answers, const Corpus& corpus,
                                            const std::string& prompt_id) {
    std::map<std::string, const GeneratedAnswer*> by_id;
    for (const auto& a : answers) {
        if (!prompt_id.empty() && a.prompt_id != prompt_id) continue;
        const auto [it, inserted] = by_id.emplace(answer_item_id(a.model, a.query_id, a.sample), &a);
        if (!inserted) {
            throw DataError("answer " + it->first + " exists for several prompts; choose one prompt for the study");
        }
    }

    std::vector<TopicRanking> out;
    out.reserve(topics.size());
    for (const auto& topic : topics) {
        const Query* query = corpus.find_query(topic.query_id);
        if (query == nullptr) throw DataError("study topic " + topic.query_id + " is not a known query");
        std::vector<PoolItem> items;
        for (const auto& id : topic.items) {
            if (is_answer_id(id)) {
                const auto it = by_id.find(id);
                if (it == by_id.end()) throw DataError("no answer text for study item " + id);
                items.push_back(PoolItem{id, it->second->text});
            } else {
                const Document* doc = corpus.docs.find(id);
                if (doc == nullptr) throw DataError("study item " + id + " is not in the document store");
                items.push_back(PoolItem{id, doc->text});
            }
        }
        out.push_back(TopicRanking{topic.query_id, RankedList(rank_pool(scorer, *query, items).item_ids())});
    }
    return out;
}

AgreementResult agreement(std::span<const TopicRanking> system, std::span<const TopicRanking> expert) {
    if (system.size() != expert.size()) {
        throw DataError("agreement: " + std::to_string(system.size()) + " system topics but " +
                        std::to_string(expert.size()) + " expert topics");
    }
    std::map<std::string, const TopicRanking*> expert_by_topic;
    for (const auto& t : expert) {
        if (!expert_by_topic.emplace(t.query_id, &t).second) {
            throw DataError("agreement: duplicate expert topic " + t.query_id);
        }
    }

    std::vector<const TopicRanking*> ordered;
    for (const auto& t : system) ordered.push_back(&t);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->query_id < b->query_id; });

    AgreementResult result;
    for (const auto* sys : ordered) {
        const auto it = expert_by_topic.find(sys->query_id);
        if (it == expert_by_topic.end()) throw DataError("agreement: no expert ranking for topic " + sys->query_id);
        auto a = sys->ranking.items();
        auto b = it->second->ranking.items();
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != b) throw DataError("agreement: item sets differ for topic " + sys->query_id);
        result.rows.push_back(AgreementRow{sys->query_id, rbo(sys->ranking, it->second->ranking, 1.0),
                                           kendall_tau(sys->ranking, it->second->ranking)});
    }
    if (!result.rows.empty()) {
        double rbo_sum = 0.0;
        double tau_sum = 0.0;
        for (const auto& row : result.rows) {
            rbo_sum += row.rbo;
            tau_sum += row.kendall_tau;
        }
        result.mean_rbo = rbo_sum / static_cast<double>(result.rows.size());
        result.mean_tau = tau_sum / static_cast<double>(result.rows.size());
    }
    return result;
}

std::string item_label(std::string_view item_id) {
    if (!is_answer_id(item_id)) return "Document";
    const auto rest = item_id.substr(kAnswerPrefix.size());
    return std::string(rest.substr(0, rest.find("::")));
}

std::vector<RankFlowRow> rank_flow(std::span<const TopicRanking> system, std::span<const TopicRanking> expert) {
    std::vector<RankFlowRow> rows;
    auto emit = [&](std::string_view source, std::span<const TopicRanking> topics) {
        for (const auto& t : topics) {
            const auto& items = t.ranking.items();
            for (std::size_t i = 0; i < items.size(); ++i) {
                rows.push_back(RankFlowRow{std::string(source), t.query_id, i + 1, items[i], item_label(items[i])});
            }
        }
    };
    emit("system", system);
    emit("expert", expert);
    return rows;
}

}  // namespace nrp
