#include "rise/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rise/errors.hpp"

namespace rise {

bool output_preserved(const StructuredPrompt& base, const StructuredPrompt& variant,
                      ModelBackend& backend, int horizon) {
    if (horizon < 1) throw ConfigError("output_preserved: horizon must be >= 1");
    if (!backend.capabilities().supports_greedy) {
        throw CapabilityError("output preservation needs a backend with greedy decoding");
    }
    return backend.greedy_decode(serialize(base), horizon) ==
           backend.greedy_decode(serialize(variant), horizon);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& scores) {
    std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double variance(const std::vector<double>& v) {
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return var;
}

} // namespace

double spearman_rank_stability(const std::vector<double>& scores_a,
                               const std::vector<double>& scores_b) {
    if (scores_a.size() != scores_b.size()) {
        throw InvariantError("spearman: score vectors differ in length");
    }
    if (scores_a.size() < 2) {
        throw InvariantError("spearman: needs at least 2 units");
    }
    std::vector<double> ra = average_ranks(scores_a);
    std::vector<double> rb = average_ranks(scores_b);
    double va = variance(ra), vb = variance(rb);
    if (va == 0.0 || vb == 0.0) return (va == 0.0 && vb == 0.0) ? 1.0 : 0.0;

    double n = static_cast<double>(ra.size());
    double mean = (n + 1.0) / 2.0;
    double cov = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - mean) * (rb[i] - mean);
    }
    return cov / std::sqrt(va * vb);
}

namespace {

// Indices of the k extreme entries; `top` picks highest scores. Ties break
// toward the lower index either way, keeping the set deterministic.
std::set<std::size_t> extreme_k(const std::vector<double>& scores, int k, bool top) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return top ? scores[a] > scores[b] : scores[a] < scores[b];
        return a < b;
    });
    std::set<std::size_t> out;
    for (int i = 0; i < k; ++i) out.insert(order[static_cast<std::size_t>(i)]);
    return out;
}

} // namespace

double topk_overlap(const std::vector<double>& scores_a,
                    const std::vector<double>& scores_b, int k) {
    if (scores_a.size() != scores_b.size()) {
        throw InvariantError("topk_overlap: score vectors differ in length");
    }
    if (k < 1 || static_cast<std::size_t>(k) > scores_a.size()) {
        throw InvariantError("topk_overlap: k out of range");
    }
    auto ta = extreme_k(scores_a, k, true);
    auto tb = extreme_k(scores_b, k, true);
    std::size_t inter = 0;
    for (std::size_t idx : ta) inter += tb.count(idx);
    return static_cast<double>(inter) / static_cast<double>(k);
}

StabilityReport aggregate_stability(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& preserved_pairs,
    int k, int n_discarded) {
    StabilityReport r;
    r.k = k;
    r.n_pairs = static_cast<int>(preserved_pairs.size());
    r.n_discarded = n_discarded;
    if (preserved_pairs.empty()) return r;
    for (const auto& [base, variant] : preserved_pairs) {
        r.spearman_rho += spearman_rank_stability(base, variant);
        r.topk_overlap += topk_overlap(base, variant, k);
    }
    r.spearman_rho /= static_cast<double>(r.n_pairs);
    r.topk_overlap /= static_cast<double>(r.n_pairs);
    return r;
}

RedundancyReport aggregate_redundancy(const std::vector<SplitResult>& dup_results,
                                      const std::vector<SplitResult>& overlap_results) {
    RedundancyReport r;
    for (const auto& s : dup_results) {
        r.dup_split += s.value;
        r.groups_evaluated += s.groups_evaluated;
        r.suppressed_groups += s.suppressed_groups;
    }
    if (!dup_results.empty()) r.dup_split /= static_cast<double>(dup_results.size());
    for (const auto& s : overlap_results) {
        r.split_index += s.value;
        r.groups_evaluated += s.groups_evaluated;
        r.suppressed_groups += s.suppressed_groups;
    }
    if (!overlap_results.empty()) {
        r.split_index /= static_cast<double>(overlap_results.size());
    }
    return r;
}

SplitResult group_split(const std::map<std::string, double>& normalized_scores,
                        const std::vector<std::vector<std::string>>& groups,
                        double mass_threshold) {
    if (groups.empty()) throw InvariantError("group_split: no groups");
    SplitResult r;
    double sum = 0.0;
    for (const auto& group : groups) {
        if (group.empty()) throw InvariantError("group_split: empty group");
        double total = 0.0, max_mass = 0.0;
        for (const auto& id : group) {
            auto it = normalized_scores.find(id);
            if (it == normalized_scores.end()) {
                throw InvariantError("group_split: unknown unit '" + id + "'");
            }
            total += it->second;
            max_mass = std::max(max_mass, it->second);
        }
        ++r.groups_evaluated;
        if (total < mass_threshold) {
            ++r.suppressed_groups; // fully suppressed group scores 0
            continue;
        }
        sum += 1.0 - max_mass / total;
    }
    r.value = sum / static_cast<double>(r.groups_evaluated);
    return r;
}

namespace {

std::vector<std::vector<std::string>> tagged_groups(const StructuredPrompt& prompt,
                                                    bool duplicates) {
    std::map<std::string, std::vector<std::string>> by_tag;
    for (const auto& u : prompt.units) {
        const auto& tag = duplicates ? u.duplicate_group : u.overlap_group;
        if (tag) by_tag[*tag].push_back(u.id);
    }
    std::vector<std::vector<std::string>> out;
    for (auto& [tag, ids] : by_tag) {
        if (ids.size() >= 2) out.push_back(std::move(ids));
    }
    return out;
}

} // namespace

std::vector<std::vector<std::string>> duplicate_groups_of(const StructuredPrompt& prompt) {
    return tagged_groups(prompt, true);
}

std::vector<std::vector<std::string>> overlap_groups_of(const StructuredPrompt& prompt) {
    return tagged_groups(prompt, false);
}

FaithfulnessReport faithfulness_gap(const StructuredPrompt& prompt,
                                    const std::map<std::string, double>& scores,
                                    const std::string& target_span, ModelBackend& backend,
                                    const FaithfulnessOptions& options) {
    if (options.m_removed < 1) throw ConfigError("faithfulness_gap: m_removed must be >= 1");

    struct Entry {
        std::string id;
        int position;
        double score;
    };
    std::vector<Entry> pool;
    for (const auto& u : prompt.units) {
        if (options.exclude_question_role && u.role == Role::question) continue;
        auto it = scores.find(u.id);
        if (it == scores.end()) {
            throw InvariantError("faithfulness_gap: no score for unit '" + u.id + "'");
        }
        pool.push_back(Entry{u.id, u.position, it->second});
    }
    if (2 * options.m_removed > static_cast<int>(pool.size())) {
        throw ConfigError("faithfulness_gap: 2*m_removed exceeds removable units");
    }

    auto pick = [&](bool top) {
        std::vector<Entry> sorted = pool;
        std::sort(sorted.begin(), sorted.end(), [&](const Entry& a, const Entry& b) {
            if (a.score != b.score) return top ? a.score > b.score : a.score < b.score;
            return a.position < b.position;
        });
        std::set<std::string> ids;
        for (int i = 0; i < options.m_removed; ++i) {
            ids.insert(sorted[static_cast<std::size_t>(i)].id);
        }
        return ids;
    };

    double full = backend.span_logprob(serialize(prompt), target_span).logprob;
    double minus_top =
        backend.span_logprob(serialize(remove_units(prompt, pick(true))), target_span).logprob;
    double minus_bottom =
        backend.span_logprob(serialize(remove_units(prompt, pick(false))), target_span).logprob;

    FaithfulnessReport r;
    r.m_removed = options.m_removed;
    r.drop_top = full - minus_top;
    r.drop_bottom = full - minus_bottom;
    r.gap = r.drop_top - r.drop_bottom;
    if (!std::isfinite(r.gap)) {
        throw InvariantError("faithfulness gap is non-finite (zero-probability span)");
    }
    return r;
}

} // namespace rise
