#pragma once

// nDCG@k for validating rankers, the normalized rank position of injected
// answers, and the rank agreement statistics (RBO, Kendall's tau).

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nrp/ranking.hpp"

namespace nrp {

/// DCG@k / IDCG@k with linear gain and a log2(i+1) discount. Items missing
/// from `grades` gain 0; the ideal ordering is built from every grade in
/// `grades`. Returns 0 when no item has a positive grade.
double ndcg_at_k(const Ranking& ranking, const std::map<std::string, int>& grades, int k);

/// 1 - rank_r / pool_size, where rank_r is the 0-based number of items
/// ranked above the answer and pool_size counts the answer itself.
double nrp(std::int64_t rank_r, std::int64_t pool_size);

struct NrpRecord {
    std::string query_id;
    std::string model;
    std::string prompt_id;
    std::int64_t sample = 0;
    std::int64_t rank_r = 0;
    std::int64_t pool_size = 0;
    double nrp = 0.0;

    bool operator==(const NrpRecord&) const = default;
};

NrpRecord make_record(std::string query_id, std::string model, std::string prompt_id, std::int64_t sample,
                      std::int64_t rank_r, std::int64_t pool_size);

/// Orders records by (query_id, model, prompt_id, sample).
bool record_key_less(const NrpRecord& a, const NrpRecord& b);

/// A total order over distinct items, best first.
class RankedList {
public:
    RankedList() = default;
    /// Throws PreconditionError on duplicates or an empty list.
    explicit RankedList(std::vector<std::string> items);

    const std::vector<std::string>& items() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }
    RankedList reversed() const;

    bool operator==(const RankedList&) const = default;

private:
    std::vector<std::string> items_;
};

/// (concordant - discordant) / (n(n-1)/2) over two orderings of the same
/// items. Throws PreconditionError if the item sets differ or n < 2.
double kendall_tau(const RankedList& a, const RankedList& b);

/// Rank-biased overlap over the common depth n = min(|a|, |b|):
/// (1-p) * sum_d p^(d-1) * A_d for p < 1, and the average overlap
/// (1/n) * sum_d A_d for p = 1, where A_d is the shared fraction of the
/// depth-d prefixes.
double rbo(const RankedList& a, const RankedList& b, double p);

/// Sample quantile with linear interpolation between closest ranks
/// (position (n-1)*q in the sorted sample). `sorted` must be ascending.
double quantile_sorted(std::span<const double> sorted, double q);

struct NrpSummary {
    std::string model;
    std::string prompt_id;
    std::size_t count = 0;
    double mean = 0.0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

/// Per (model, prompt_id) statistics over every (query, sample) record,
/// sorted by model then prompt.
std::vector<NrpSummary> aggregate_nrp(std::span<const NrpRecord> records);

/// Mean NRP of each (model, prompt_id, query_id) over its samples.
struct QueryMean {
    std::string model;
    std::string prompt_id;
    std::string query_id;
    std::size_t count = 0;
    double mean = 0.0;
};

std::vector<QueryMean> per_query_means(std::span<const NrpRecord> records);

}  // namespace nrp
