#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rise/backend.hpp"
#include "rise/oracle.hpp"
#include "rise/oracle_world.hpp"

namespace rise {

// Text interface over an OracleWorld. Context text informs the oracle
// through `name=value` fragments: every maximal identifier token followed by
// '=' and an identifier token is checked against the world's variables and
// alphabets. Fragments that do not resolve (unknown names, unknown symbols,
// truncated values) carry no information and are ignored, which is what
// makes prefix-truncated overlap injections output-preserving. Repeated
// consistent observations are idempotent; contradictory ones make the
// context impossible and raise OracleError.
//
// Emission is memoryless: generated tokens are bare target symbols, which
// never parse as observations, so each decode step draws from the same
// posterior. Spans are whitespace-separated target symbols.
class OracleBackend : public ModelBackend {
public:
    explicit OracleBackend(OracleWorld world);

    NextTokenDistribution next_token_distribution(std::string_view context) override;
    SpanScore span_logprob(std::string_view context, std::string_view target) override;
    std::string greedy_decode(std::string_view context, int max_steps) override;
    BackendCapabilities capabilities() const override;
    std::string identity() const override { return "oracle:" + world_.name; }

    const OracleWorld& world() const { return world_; }

    // Observation vector parsed from context text (value index per variable,
    // -1 unobserved). Exposed for the exact estimators.
    Observation parse_observations(std::string_view context) const;

private:
    OracleWorld world_;
};

// Walks wrapper delegates (caches, instrumentation) down to the oracle, or
// nullptr when the chain bottoms out elsewhere.
inline OracleBackend* unwrap_oracle(ModelBackend& backend) {
    ModelBackend* b = &backend;
    while (b) {
        if (auto* oracle = dynamic_cast<OracleBackend*>(b)) return oracle;
        b = b->delegate();
    }
    return nullptr;
}

} // namespace rise
