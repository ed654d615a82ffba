#pragma once

#include <map>
#include <string>
#include <vector>

#include "rise/backend.hpp"
#include "rise/context.hpp"

namespace rise {

// Strict output-preservation check: greedy decodes of base and variant must
// agree exactly (string equality) up to the horizon. Stability metrics are
// only meaningful over preserved pairs; anything else is model-behavior
// change, not explanation instability.
bool output_preserved(const StructuredPrompt& base, const StructuredPrompt& variant,
                      ModelBackend& backend, int horizon);

// Spearman rank correlation with average-rank tie handling. Inputs are
// score vectors aligned per unit (same unit at the same index). Throws on
// fewer than 2 entries. Rank-degenerate inputs (zero rank variance) are
// mapped to 1 when both sides are constant, 0 when only one is.
double spearman_rank_stability(const std::vector<double>& scores_a,
                               const std::vector<double>& scores_b);

// |top-k(a) intersect top-k(b)| / k, with ties broken by lower index so the
// top-k set is deterministic.
double topk_overlap(const std::vector<double>& scores_a,
                    const std::vector<double>& scores_b, int k);

struct StabilityReport {
    double spearman_rho = 0.0;
    double topk_overlap = 0.0;
    int k = 0;
    int n_pairs = 0;     // output-preserving base/variant pairs used
    int n_discarded = 0; // variants failing preservation
};

// Mean stability over the preserved base/variant score pairs. Pairs are
// aligned score vectors (base first); discarded variants only count.
StabilityReport aggregate_stability(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& preserved_pairs,
    int k, int n_discarded);

// Attribution-mass fragmentation across a group: 1 - max/sum of the group's
// normalized mass, 0 for groups whose total mass is below the threshold
// (fully suppressed, the ideal outcome). The overall value is the mean over
// groups. Applied to duplicate groups this is Dup-Split; to overlap groups,
// SplitIndex.
struct SplitResult {
    double value = 0.0;
    int groups_evaluated = 0;
    int suppressed_groups = 0; // groups below the mass threshold
};

SplitResult group_split(const std::map<std::string, double>& normalized_scores,
                        const std::vector<std::vector<std::string>>& groups,
                        double mass_threshold);

inline SplitResult dup_split(const std::map<std::string, double>& normalized_scores,
                             const std::vector<std::vector<std::string>>& duplicate_groups,
                             double mass_threshold) {
    return group_split(normalized_scores, duplicate_groups, mass_threshold);
}

inline SplitResult split_index(const std::map<std::string, double>& normalized_scores,
                               const std::vector<std::vector<std::string>>& overlap_groups,
                               double mass_threshold) {
    return group_split(normalized_scores, overlap_groups, mass_threshold);
}

// Collect groups from the prompt's duplicate_group / overlap_group tags.
std::vector<std::vector<std::string>> duplicate_groups_of(const StructuredPrompt& prompt);
std::vector<std::vector<std::string>> overlap_groups_of(const StructuredPrompt& prompt);

struct RedundancyReport {
    double dup_split = 0.0;   // in [0, 1]
    double split_index = 0.0; // in [0, 1]
    int groups_evaluated = 0;
    int suppressed_groups = 0;
};

// Combines per-variant split results into one redundancy summary.
RedundancyReport aggregate_redundancy(const std::vector<SplitResult>& dup_results,
                                      const std::vector<SplitResult>& overlap_results);

struct FaithfulnessReport {
    double gap = 0.0; // nats; positive means faithful ranking
    int m_removed = 0;
    double drop_top = 0.0;
    double drop_bottom = 0.0;
};

struct FaithfulnessOptions {
    int m_removed = 1;
    // Question units are structurally necessary; removing them measures
    // template damage, not informational contribution. A flag re-includes
    // them.
    bool exclude_question_role = true;
};

// [logp(S|full) - logp(S|minus top-m)] - [logp(S|full) - logp(S|minus
// bottom-m)]. Top-m picks highest scores (ties: lower position); bottom-m
// picks lowest scores (ties: lower position).
FaithfulnessReport faithfulness_gap(const StructuredPrompt& prompt,
                                    const std::map<std::string, double>& scores,
                                    const std::string& target_span, ModelBackend& backend,
                                    const FaithfulnessOptions& options);

} // namespace rise
