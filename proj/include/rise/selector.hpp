#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rise/attribution.hpp"
#include "rise/backend.hpp"
#include "rise/context.hpp"

namespace rise {

// Lightweight dependence-aware context selection: keep the first L units as
// the mandatory recent window, score the remaining candidates by their
// dependence conditioned on that window, keep the top-K positives.
struct SelectorConfig {
    int recent_window = 0; // L
    int anchor_budget = 0; // K
    Estimator estimator = Estimator::pointwise_kl;
    double positive_threshold = 1e-9; // minimal score counted as positive
    // Fill the budget with non-positive candidates when positives run short.
    bool pad_below_threshold = false;
    // Re-condition scores on already-selected anchors each round. The
    // default ranks every candidate against the recent window alone; the
    // greedy mode is what makes overlapping candidates suppress each other.
    bool greedy_conditional = false;
};

struct CandidateScore {
    std::string unit_id;
    double score = 0.0; // restricted dependence, nats
};

struct SelectionResult {
    std::string prompt_id;
    int recent_window = 0;
    int anchor_budget = 0;
    std::vector<std::string> recent;     // ids of the mandatory window, in order
    std::vector<CandidateScore> candidates; // all candidates with scores
    std::vector<std::string> selected;   // chosen anchor ids
    int shortfall = 0; // budget not met by positively scored candidates
    StructuredPrompt reduced_prompt;     // recent + selected, original order
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

// Restricted dependence of one candidate conditioned on the recent window
// only: plug-in KL(p(.|R + c) || p(.|R)), or exact I(C; Y | R) on oracle
// backends.
CudEstimate restricted_cud(const StructuredPrompt& prompt, const std::string& candidate_id,
                           const std::vector<std::string>& recent_ids, ModelBackend& backend,
                           Estimator estimator = Estimator::pointwise_kl);

// Restricted scores normalized over the candidate pool, with the same
// epsilon and degeneracy conventions as attribution.
AttributionResult restricted_rise(const StructuredPrompt& prompt,
                                  const std::vector<std::string>& recent_ids,
                                  ModelBackend& backend,
                                  Estimator estimator = Estimator::pointwise_kl,
                                  double epsilon = 1e-12);

SelectionResult select_context(const StructuredPrompt& prompt, const SelectorConfig& config,
                               ModelBackend& backend);

// 1 - Jaccard similarity of consecutive anchor sets; both empty -> 0.
double anchor_drift(const SelectionResult& previous, const SelectionResult& current);
double anchor_drift(const std::vector<std::string>& previous,
                    const std::vector<std::string>& current);

} // namespace rise
