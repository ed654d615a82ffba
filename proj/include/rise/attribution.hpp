#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rise/backend.hpp"
#include "rise/context.hpp"

namespace rise {

class OracleBackend;

enum class Estimator { pointwise_kl, ensemble_kl, exact, span_llr };
std::string_view to_string(Estimator estimator);
Estimator estimator_from_string(std::string_view name);

enum class TargetKind { next_token, span };
std::string_view to_string(TargetKind kind);

// Per-unit conditional unique dependence estimate, in nats.
struct CudEstimate {
    std::string unit_id;
    double value = 0.0;     // clamped at 0 for normalization
    double raw_value = 0.0; // signed plug-in value before clamping
    Estimator estimator = Estimator::pointwise_kl;
    int evaluations = 0;    // backend calls used for this estimate
    bool floored_zero = false; // KL hit the 1e-300 probability floor
};

// Normalized attribution over units (or over groups when grouping is used).
struct ScoreRow {
    std::string unit_id; // unit id or group label
    Role role = Role::instruction;
    double cud = 0.0;
    double raw_cud = 0.0;
    double rise = 0.0;
};

struct AttributionResult {
    std::string prompt_id;
    TargetKind target_kind = TargetKind::next_token;
    Estimator estimator = Estimator::pointwise_kl;
    double epsilon = 1e-12;
    bool degenerate = false;
    std::vector<ScoreRow> rows; // prompt position order

    double score_of(std::string_view unit_id) const;
    // Non-negativity and (non-degenerate) sum-to-one within 1e-9.
    void validate() const;
    nlohmann::json to_json() const;
};

struct UnitGroup {
    std::vector<std::string> member_ids; // non-empty, existing units
    std::string label;
};

// Weighted alternative contents for one unit; weights sum to 1 within 1e-9.
struct ReplacementEnsemble {
    struct Member {
        std::string text;
        double weight = 0.0;
    };
    std::vector<Member> members;
};

// Plug-in at the realized context: KL(p(.|C) || p(.|C_-i)). The full-context
// distribution can be passed in so one query serves every unit.
CudEstimate cud_pointwise_kl(const StructuredPrompt& prompt, const std::string& unit_id,
                             ModelBackend& backend,
                             const NextTokenDistribution* full_context = nullptr);

// Monte-Carlo outer expectation over the unit's contents: the weighted
// average KL between each replacement's conditional and the weighted mixture.
// Equals the realization-conditioned exact CMI when the ensemble enumerates
// the oracle's conditional law of the unit given the rest.
CudEstimate cud_ensemble(const StructuredPrompt& prompt, const std::string& unit_id,
                         const ReplacementEnsemble& ensemble, ModelBackend& backend);

// Span-level plug-in: log p(S|C) - log p(S|C_-i), clamped at 0; the signed
// value is kept in raw_value.
CudEstimate span_cud(const StructuredPrompt& prompt, const std::string& unit_id,
                     const std::string& target_span, ModelBackend& backend,
                     const SpanScore* full_context = nullptr);

// Normalization: a_i = cud_i / sum(cud). epsilon only gates degeneracy
// (sum <= 10*epsilon reports all-zero scores with the flag set); the
// non-degenerate division is exact so scores always sum to 1.
AttributionResult rise_scores(std::vector<CudEstimate> cuds, double epsilon,
                              const StructuredPrompt& prompt, TargetKind target_kind);

// Leave-group-out dependence. Plug-in KL by default; exact enumeration on
// backends that support it, where it equals the chain-rule sum over any
// member ordering.
CudEstimate group_cud(const StructuredPrompt& prompt, const UnitGroup& group,
                      ModelBackend& backend,
                      Estimator estimator = Estimator::pointwise_kl);

struct AttributeOptions {
    Estimator estimator = Estimator::pointwise_kl;
    TargetKind target_kind = TargetKind::next_token;
    std::string target_span;       // required when target_kind == span
    double epsilon = 1e-12;
    std::vector<UnitGroup> groups; // optional; uncovered units stay singletons
};

// End-to-end orchestration of the per-unit estimates plus normalization.
// Pointwise estimators issue exactly one full-context query and one
// leave-out query per unit (or per group).
//
// Cost model: m parts mean m conditional-dependence terms, O(m * CostCMI)
// overall, where CostCMI is one backend round trip for the plug-in
// estimators and one joint enumeration for the exact one. Grouping units
// is the lever that shrinks m for long prompts; the full-context query is
// shared and leave-out queries are cache-friendly across parts.
AttributionResult attribute(const StructuredPrompt& prompt, ModelBackend& backend,
                            const AttributeOptions& options);

} // namespace rise
