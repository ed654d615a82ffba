#include "rise/baselines.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "rise/attribution.hpp"
#include "rise/errors.hpp"

namespace rise {

std::string_view to_string(BaselineMethod method) {
    switch (method) {
        case BaselineMethod::louo_logprob_drop: return "louo_logprob_drop";
        case BaselineMethod::uniform: return "uniform";
        case BaselineMethod::position_decay: return "position_decay";
    }
    return "uniform";
}

double BaselineAttribution::normalized_of(std::string_view unit_id) const {
    for (std::size_t i = 0; i < unit_ids.size(); ++i) {
        if (unit_ids[i] == unit_id) return normalized[i];
    }
    throw InvariantError("no baseline score for unit '" + std::string(unit_id) + "'");
}

nlohmann::json BaselineAttribution::to_json() const {
    nlohmann::json j;
    j["prompt_id"] = prompt_id;
    j["method"] = std::string(to_string(method));
    j["degenerate"] = degenerate;
    j["scores"] = nlohmann::json::array();
    for (std::size_t i = 0; i < unit_ids.size(); ++i) {
        j["scores"].push_back({{"unit_id", unit_ids[i]},
                               {"score", scores[i]},
                               {"normalized", normalized[i]}});
    }
    return j;
}

namespace {

// Same degeneracy convention as attribution: epsilon only gates the
// all-zero case, the live branch divides exactly.
void normalize(BaselineAttribution& b, const std::vector<double>& clamped) {
    constexpr double kEpsilon = 1e-12;
    double sum = 0.0;
    for (double v : clamped) sum += v;
    b.degenerate = sum <= 10.0 * kEpsilon;
    b.normalized.resize(clamped.size());
    for (std::size_t i = 0; i < clamped.size(); ++i) {
        b.normalized[i] = b.degenerate ? 0.0 : clamped[i] / sum;
    }
}

} // namespace

BaselineAttribution louo_logprob_drop(const StructuredPrompt& prompt,
                                      const std::string& target_span, ModelBackend& backend) {
    if (target_span.empty()) throw InvariantError("louo_logprob_drop: empty target span");
    BaselineAttribution b;
    b.method = BaselineMethod::louo_logprob_drop;
    b.prompt_id = prompt.id;

    SpanScore full = backend.span_logprob(serialize(prompt), target_span);
    std::vector<double> clamped;
    for (const auto& u : prompt.units) {
        CudEstimate e = span_cud(prompt, u.id, target_span, backend, &full);
        b.unit_ids.push_back(u.id);
        b.scores.push_back(e.raw_value);
        clamped.push_back(e.value);
    }
    normalize(b, clamped);
    return b;
}

BaselineAttribution uniform_baseline(const StructuredPrompt& prompt) {
    if (prompt.units.empty()) throw InvariantError("uniform_baseline: empty prompt");
    BaselineAttribution b;
    b.method = BaselineMethod::uniform;
    b.prompt_id = prompt.id;
    double w = 1.0 / static_cast<double>(prompt.units.size());
    for (const auto& u : prompt.units) {
        b.unit_ids.push_back(u.id);
        b.scores.push_back(w);
        b.normalized.push_back(w);
    }
    return b;
}

BaselineAttribution position_decay_baseline(const StructuredPrompt& prompt, double decay) {
    if (prompt.units.empty()) throw InvariantError("position_decay_baseline: empty prompt");
    if (!(decay > 0.0 && decay <= 1.0)) {
        throw ConfigError("position_decay_baseline: decay must lie in (0, 1]");
    }
    if (decay == 1.0) {
        BaselineAttribution b = uniform_baseline(prompt);
        b.method = BaselineMethod::position_decay;
        return b;
    }
    BaselineAttribution b;
    b.method = BaselineMethod::position_decay;
    b.prompt_id = prompt.id;
    int last = prompt.units.back().position;
    std::vector<double> raw;
    for (const auto& u : prompt.units) {
        double w = std::pow(decay, static_cast<double>(last - u.position));
        b.unit_ids.push_back(u.id);
        b.scores.push_back(w);
        raw.push_back(w);
    }
    normalize(b, raw);
    return b;
}

} // namespace rise
