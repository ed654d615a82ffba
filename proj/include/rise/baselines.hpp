#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rise/backend.hpp"
#include "rise/context.hpp"

namespace rise {

enum class BaselineMethod { louo_logprob_drop, uniform, position_decay };
std::string_view to_string(BaselineMethod method);

// Reference attribution methods computable from input-output behavior alone.
// The attention baseline is deliberately absent: the backend contract
// exposes no model internals, so reports render that column as unavailable.
struct BaselineAttribution {
    BaselineMethod method = BaselineMethod::uniform;
    std::string prompt_id;
    std::vector<std::string> unit_ids;  // prompt position order
    std::vector<double> scores;         // raw per-unit values
    std::vector<double> normalized;     // sum to 1 unless degenerate
    bool degenerate = false;

    double normalized_of(std::string_view unit_id) const;
    nlohmann::json to_json() const;
};

// Per-unit teacher-forced drop log p(S|C) - log p(S|C_-i). Shares the
// span-dependence code path, so drops equal span_cud raw values exactly.
BaselineAttribution louo_logprob_drop(const StructuredPrompt& prompt,
                                      const std::string& target_span, ModelBackend& backend);

BaselineAttribution uniform_baseline(const StructuredPrompt& prompt);

// Recency heuristic: score proportional to decay^(distance from the last
// position). decay == 1 is configured as exactly uniform.
BaselineAttribution position_decay_baseline(const StructuredPrompt& prompt, double decay);

} // namespace rise
