#include "nrp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "nrp/error.hpp"

namespace nrp {

double ndcg_at_k(const Ranking& ranking, const std::map<std::string, int>& grades, int k) {
    if (k < 1) throw PreconditionError("ndcg_at_k: k must be >= 1");
    const auto depth = std::min<std::size_t>(static_cast<std::size_t>(k), ranking.entries.size());
    double dcg = 0.0;
    for (std::size_t i = 0; i < depth; ++i) {
        const auto it = grades.find(ranking.entries[i].item_id);
        if (it == grades.end() || it->second <= 0) continue;
        dcg += static_cast<double>(it->second) / std::log2(static_cast<double>(i) + 2.0);
    }

    std::vector<int> ideal;
    ideal.reserve(grades.size());
    for (const auto& [id, g] : grades) {
        if (g > 0) ideal.push_back(g);
    }
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    const auto ideal_depth = std::min<std::size_t>(static_cast<std::size_t>(k), ideal.size());
    for (std::size_t i = 0; i < ideal_depth; ++i) {
        idcg += static_cast<double>(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
    }
    return idcg > 0.0 ? dcg / idcg : 0.0;
}

double nrp(std::int64_t rank_r, std::int64_t pool_size) {
    if (pool_size < 2) throw PreconditionError("nrp: pool_size must be >= 2, got " + std::to_string(pool_size));
    if (rank_r < 0 || rank_r >= pool_size) {
        throw PreconditionError("nrp: rank " + std::to_string(rank_r) + " outside [0, " + std::to_string(pool_size) + ")");
    }
    return 1.0 - static_cast<double>(rank_r) / static_cast<double>(pool_size);
}

NrpRecord make_record(std::string query_id, std::string model, std::string prompt_id, std::int64_t sample,
                      std::int64_t rank_r, std::int64_t pool_size) {
    if (sample < 0) throw PreconditionError("sample index must be >= 0");
    const double value = nrp(rank_r, pool_size);
    return NrpRecord{std::move(query_id), std::move(model), std::move(prompt_id), sample, rank_r, pool_size, value};
}

bool record_key_less(const NrpRecord& a, const NrpRecord& b) {
    return std::tie(a.query_id, a.model, a.prompt_id, a.sample) < std::tie(b.query_id, b.model, b.prompt_id, b.sample);
}

RankedList::RankedList(std::vector<std::string> items) : items_(std::move(items)) {
    if (items_.empty()) throw PreconditionError("ranked list must not be empty");
    std::unordered_set<std::string_view> seen;
    for (const auto& item : items_) {
        if (!seen.insert(item).second) throw PreconditionError("duplicate item in ranked list: " + item);
    }
}

RankedList RankedList::reversed() const {
    return RankedList(std::vector<std::string>(items_.rbegin(), items_.rend()));
}

namespace {

// Inversions of `seq` via merge sort.
std::int64_t count_inversions(std::vector<std::size_t>& seq, std::vector<std::size_t>& scratch, std::size_t lo,
                              std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::int64_t inv = count_inversions(seq, scratch, lo, mid) + count_inversions(seq, scratch, mid, hi);
    std::size_t i = lo;
    std::size_t j = mid;
    std::size_t out = lo;
    while (i < mid && j < hi) {
        if (seq[i] <= seq[j]) {
            scratch[out++] = seq[i++];
        } else {
            inv += static_cast<std::int64_t>(mid - i);
            scratch[out++] = seq[j++];
        }
    }
    while (i < mid) scratch[out++] = seq[i++];
    while (j < hi) scratch[out++] = seq[j++];
    std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
              seq.begin() + static_cast<std::ptrdiff_t>(lo));
    return inv;
}

}  // namespace

double kendall_tau(const RankedList& a, const RankedList& b) {
    const std::size_t n = a.size();
    if (n != b.size()) throw PreconditionError("kendall_tau: lists have different lengths");
    if (n < 2) throw PreconditionError("kendall_tau: need at least two items");
    std::unordered_map<std::string_view, std::size_t> pos_in_b;
    pos_in_b.reserve(n);
    for (std::size_t i = 0; i < n; ++i) pos_in_b.emplace(b.items()[i], i);

    std::vector<std::size_t> seq;
    seq.reserve(n);
    for (const auto& item : a.items()) {
        const auto it = pos_in_b.find(item);
        if (it == pos_in_b.end()) throw PreconditionError("kendall_tau: item " + item + " missing from second list");
        seq.push_back(it->second);
    }
    std::vector<std::size_t> scratch(n);
    const auto discordant = count_inversions(seq, scratch, 0, n);
    const auto pairs = static_cast<std::int64_t>(n * (n - 1) / 2);
    const auto concordant = pairs - discordant;
    return static_cast<double>(concordant - discordant) / static_cast<double>(pairs);
}

double rbo(const RankedList& a, const RankedList& b, double p) {
    if (!(p > 0.0 && p <= 1.0)) throw PreconditionError("rbo: p must lie in (0, 1]");
    const std::size_t n = std::min(a.size(), b.size());
    if (n == 0) throw PreconditionError("rbo: empty list");

    std::unordered_set<std::string_view> seen_a;
    std::unordered_set<std::string_view> seen_b;
    std::size_t overlap = 0;
    double sum = 0.0;
    double weight = 1.0;
    for (std::size_t d = 0; d < n; ++d) {
        const std::string_view x = a.items()[d];
        const std::string_view y = b.items()[d];
        if (x == y) {
            ++overlap;
        } else {
            overlap += seen_b.contains(x) ? 1 : 0;
            overlap += seen_a.contains(y) ? 1 : 0;
        }
        seen_a.insert(x);
        seen_b.insert(y);
        const double agreement = static_cast<double>(overlap) / static_cast<double>(d + 1);
        if (p == 1.0) {
            sum += agreement;
        } else {
            sum += weight * agreement;
            weight *= p;
        }
    }
    return p == 1.0 ? sum / static_cast<double>(n) : (1.0 - p) * sum;
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw PreconditionError("quantile of an empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw PreconditionError("quantile level outside [0, 1]");
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<NrpSummary> aggregate_nrp(std::span<const NrpRecord> records) {
    std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
    for (const auto& r : records) groups[{r.model, r.prompt_id}].push_back(r.nrp);

    std::vector<NrpSummary> out;
    out.reserve(groups.size());
    for (auto& [key, values] : groups) {
        NrpSummary s;
        s.model = key.first;
        s.prompt_id = key.second;
        s.count = values.size();
        s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        std::sort(values.begin(), values.end());
        s.min = values.front();
        s.max = values.back();
        s.q1 = quantile_sorted(values, 0.25);
        s.median = quantile_sorted(values, 0.5);
        s.q3 = quantile_sorted(values, 0.75);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<QueryMean> per_query_means(std::span<const NrpRecord> records) {
    std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, std::size_t>> groups;
    for (const auto& r : records) {
        auto& [sum, count] = groups[{r.model, r.prompt_id, r.query_id}];
        sum += r.nrp;
        ++count;
    }
    std::vector<QueryMean> out;
    out.reserve(groups.size());
    for (const auto& [key, acc] : groups) {
        out.push_back(QueryMean{std::get<0>(key), std::get<1>(key), std::get<2>(key), acc.second,
                                acc.first / static_cast<double>(acc.second)});
    }
    return out;
}

}  // namespace nrp
