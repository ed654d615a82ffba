#include "rise/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "rise/errors.hpp"
#include "rise/oracle_backend.hpp"

namespace rise {

std::string_view to_string(Estimator estimator) {
    switch (estimator) {
        case Estimator::pointwise_kl: return "pointwise_kl";
        case Estimator::ensemble_kl: return "ensemble_kl";
        case Estimator::exact: return "exact";
        case Estimator::span_llr: return "span_llr";
    }
    return "pointwise_kl";
}

Estimator estimator_from_string(std::string_view name) {
    if (name == "pointwise_kl") return Estimator::pointwise_kl;
    if (name == "ensemble_kl") return Estimator::ensemble_kl;
    if (name == "exact") return Estimator::exact;
    if (name == "span_llr") return Estimator::span_llr;
    throw ConfigError("unknown estimator: " + std::string(name));
}

std::string_view to_string(TargetKind kind) {
    return kind == TargetKind::span ? "span" : "next_token";
}

double AttributionResult::score_of(std::string_view unit_id) const {
    for (const auto& r : rows) {
        if (r.unit_id == unit_id) return r.rise;
    }
    throw InvariantError("no attribution row for unit '" + std::string(unit_id) + "'");
}

void AttributionResult::validate() const {
    double sum = 0.0;
    for (const auto& r : rows) {
        if (r.rise < 0.0 || r.cud < 0.0) {
            throw InvariantError("negative attribution for unit '" + r.unit_id + "'");
        }
        sum += r.rise;
    }
    if (degenerate) {
        if (sum != 0.0) {
            throw InvariantError("degenerate attribution must report all-zero scores");
        }
    } else if (std::abs(sum - 1.0) > 1e-9) {
        throw InvariantError("attribution scores sum to " + std::to_string(sum));
    }
}

nlohmann::json AttributionResult::to_json() const {
    nlohmann::json j;
    j["prompt_id"] = prompt_id;
    j["target_kind"] = std::string(to_string(target_kind));
    j["estimator"] = std::string(to_string(estimator));
    j["epsilon"] = epsilon;
    j["degenerate"] = degenerate;
    j["scores"] = nlohmann::json::array();
    for (const auto& r : rows) {
        j["scores"].push_back({{"unit_id", r.unit_id},
                               {"role", std::string(to_string(r.role))},
                               {"cud", r.cud},
                               {"raw_cud", r.raw_cud},
                               {"rise", r.rise}});
    }
    return j;
}

CudEstimate cud_pointwise_kl(const StructuredPrompt& prompt, const std::string& unit_id,
                             ModelBackend& backend,
                             const NextTokenDistribution* full_context) {
    if (!prompt.has_unit(unit_id)) {
        throw InvariantError("cud_pointwise_kl: unknown unit '" + unit_id + "'");
    }
    NextTokenDistribution full =
        full_context ? *full_context : backend.next_token_distribution(serialize(prompt));
    NextTokenDistribution loo =
        backend.next_token_distribution(serialize(remove_units(prompt, {unit_id})));
    KlResult kl = kl_divergence(full, loo);

    CudEstimate e;
    e.unit_id = unit_id;
    e.raw_value = kl.nats;
    e.value = kl.nats;
    e.estimator = Estimator::pointwise_kl;
    e.evaluations = 2;
    e.floored_zero = kl.floored;
    return e;
}

CudEstimate cud_ensemble(const StructuredPrompt& prompt, const std::string& unit_id,
                         const ReplacementEnsemble& ensemble, ModelBackend& backend) {
    if (ensemble.members.empty()) {
        throw ConfigError("cud_ensemble: empty replacement ensemble");
    }
    double wsum = 0.0;
    for (const auto& m : ensemble.members) {
        if (m.weight < 0.0) throw ConfigError("cud_ensemble: negative ensemble weight");
        wsum += m.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) {
        throw ConfigError("cud_ensemble: ensemble weights sum to " + std::to_string(wsum));
    }
    if (!prompt.has_unit(unit_id)) {
        throw InvariantError("cud_ensemble: unknown unit '" + unit_id + "'");
    }

    std::vector<NextTokenDistribution> conditionals;
    std::vector<double> weights;
    conditionals.reserve(ensemble.members.size());
    for (const auto& m : ensemble.members) {
        if (m.weight == 0.0) continue; // carries no mass, never queried
        StructuredPrompt replaced = prompt;
        for (auto& u : replaced.units) {
            if (u.id == unit_id) {
                u.text = m.text;
                u.duplicate_group.reset();
            }
        }
        conditionals.push_back(backend.next_token_distribution(serialize(replaced)));
        weights.push_back(m.weight);
    }
    NextTokenDistribution mixed = mixture(conditionals, weights);

    CudEstimate e;
    e.unit_id = unit_id;
    e.estimator = Estimator::ensemble_kl;
    e.evaluations = static_cast<int>(conditionals.size());
    for (std::size_t k = 0; k < conditionals.size(); ++k) {
        KlResult kl = kl_divergence(conditionals[k], mixed);
        e.value += weights[k] * kl.nats;
        e.floored_zero = e.floored_zero || kl.floored;
    }
    e.raw_value = e.value;
    return e;
}

CudEstimate span_cud(const StructuredPrompt& prompt, const std::string& unit_id,
                     const std::string& target_span, ModelBackend& backend,
                     const SpanScore* full_context) {
    if (target_span.empty()) throw InvariantError("span_cud: empty target span");
    if (!prompt.has_unit(unit_id)) {
        throw InvariantError("span_cud: unknown unit '" + unit_id + "'");
    }
    SpanScore full =
        full_context ? *full_context : backend.span_logprob(serialize(prompt), target_span);
    SpanScore loo =
        backend.span_logprob(serialize(remove_units(prompt, {unit_id})), target_span);

    CudEstimate e;
    e.unit_id = unit_id;
    e.raw_value = full.logprob - loo.logprob;
    e.value = std::max(e.raw_value, 0.0);
    e.estimator = Estimator::span_llr;
    e.evaluations = 2;
    return e;
}

AttributionResult rise_scores(std::vector<CudEstimate> cuds, double epsilon,
                              const StructuredPrompt& prompt, TargetKind target_kind) {
    if (cuds.empty()) throw InvariantError("rise_scores: no units");
    if (!(epsilon > 0.0)) throw ConfigError("rise_scores: epsilon must be positive");

    double sum = 0.0;
    for (const auto& c : cuds) {
        if (c.value < 0.0 || std::isnan(c.value)) {
            throw InvariantError("rise_scores: negative dependence value for unit '" +
                                 c.unit_id + "'");
        }
        sum += c.value;
    }

    AttributionResult res;
    res.prompt_id = prompt.id;
    res.target_kind = target_kind;
    res.estimator = cuds.front().estimator;
    res.epsilon = epsilon;
    res.degenerate = sum <= 10.0 * epsilon;
    for (const auto& c : cuds) {
        ScoreRow row;
        row.unit_id = c.unit_id;
        if (const ContextUnit* u = prompt.find(c.unit_id)) row.role = u->role;
        row.cud = c.value;
        row.raw_cud = c.raw_value;
        row.rise = res.degenerate ? 0.0 : c.value / sum;
        res.rows.push_back(std::move(row));
    }
    res.validate();
    return res;
}

namespace {

// Unit -> world-variable mapping for the exact estimator: the variables a
// unit observes when its text is parsed in isolation.
std::vector<int> unit_variables(const OracleBackend& oracle, const ContextUnit& unit) {
    Observation obs = oracle.parse_observations(unit.text);
    std::vector<int> vars;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (obs[i] >= 0) vars.push_back(static_cast<int>(i));
    }
    return vars;
}

CudEstimate exact_group_estimate(const StructuredPrompt& prompt,
                                 const std::vector<std::string>& member_ids,
                                 const std::string& label, ModelBackend& backend) {
    auto* oracle = unwrap_oracle(backend);
    if (!oracle || !backend.capabilities().exact) {
        throw CapabilityError("exact estimator requires an exact (oracle) backend");
    }
    std::set<std::string> member_set(member_ids.begin(), member_ids.end());
    std::vector<int> attr_vars;
    std::vector<int> cond_vars;
    for (const auto& u : prompt.units) {
        auto vars = unit_variables(*oracle, u);
        auto& sink = member_set.count(u.id) ? attr_vars : cond_vars;
        sink.insert(sink.end(), vars.begin(), vars.end());
    }
    // A variable also observed by the remaining context carries no unique
    // dependence; conditioning screens it off exactly.
    std::vector<int> reduced;
    for (int v : attr_vars) {
        if (std::find(cond_vars.begin(), cond_vars.end(), v) == cond_vars.end() &&
            std::find(reduced.begin(), reduced.end(), v) == reduced.end()) {
            reduced.push_back(v);
        }
    }
    CudEstimate e;
    e.unit_id = label;
    e.estimator = Estimator::exact;
    e.evaluations = 0;
    e.value = reduced.empty() ? 0.0 : exact_cmi_group(oracle->world(), reduced, cond_vars);
    e.raw_value = e.value;
    return e;
}

} // namespace

CudEstimate group_cud(const StructuredPrompt& prompt, const UnitGroup& group,
                      ModelBackend& backend, Estimator estimator) {
    if (group.member_ids.empty()) throw InvariantError("group_cud: empty group");
    std::set<std::string> ids(group.member_ids.begin(), group.member_ids.end());
    for (const auto& id : ids) {
        if (!prompt.has_unit(id)) {
            throw InvariantError("group_cud: unknown unit '" + id + "'");
        }
    }
    std::string label = group.label.empty() ? *ids.begin() : group.label;

    if (estimator == Estimator::exact) {
        return exact_group_estimate(prompt, group.member_ids, label, backend);
    }
    if (estimator != Estimator::pointwise_kl) {
        throw ConfigError("group_cud supports pointwise_kl and exact estimators");
    }
    NextTokenDistribution full = backend.next_token_distribution(serialize(prompt));
    NextTokenDistribution lgo = backend.next_token_distribution(serialize(remove_units(prompt, ids)));
    KlResult kl = kl_divergence(full, lgo);
    CudEstimate e;
    e.unit_id = label;
    e.value = kl.nats;
    e.raw_value = kl.nats;
    e.estimator = Estimator::pointwise_kl;
    e.evaluations = 2;
    e.floored_zero = kl.floored;
    return e;
}

AttributionResult attribute(const StructuredPrompt& prompt, ModelBackend& backend,
                            const AttributeOptions& options) {
    if (prompt.units.empty()) throw InvariantError("attribute: empty prompt");

    // Partition into scoring parts: explicit groups plus singletons for
    // uncovered units, ordered by first member position.
    struct Part {
        std::string label;
        std::vector<std::string> member_ids;
        int first_position = 0;
    };
    std::vector<Part> parts;
    std::unordered_set<std::string> covered;
    for (const auto& g : options.groups) {
        if (g.member_ids.empty()) throw InvariantError("attribute: empty group");
        Part part;
        part.label = g.label;
        part.first_position = static_cast<int>(prompt.units.size());
        for (const auto& id : g.member_ids) {
            const ContextUnit* u = prompt.find(id);
            if (!u) throw InvariantError("attribute: unknown group member '" + id + "'");
            if (!covered.insert(id).second) {
                throw InvariantError("attribute: groups overlap on unit '" + id + "'");
            }
            part.member_ids.push_back(id);
            part.first_position = std::min(part.first_position, u->position);
        }
        if (part.label.empty()) part.label = part.member_ids.front();
        parts.push_back(std::move(part));
    }
    for (const auto& u : prompt.units) {
        if (covered.count(u.id)) continue;
        parts.push_back(Part{u.id, {u.id}, u.position});
    }
    std::sort(parts.begin(), parts.end(),
              [](const Part& a, const Part& b) { return a.first_position < b.first_position; });

    Estimator estimator = options.estimator;
    if (options.target_kind == TargetKind::span) {
        if (options.target_span.empty()) {
            throw ConfigError("attribute: span target requires target_span");
        }
        estimator = Estimator::span_llr;
    } else if (estimator == Estimator::span_llr) {
        throw ConfigError("attribute: span_llr estimator requires a span target");
    }
    if (estimator == Estimator::ensemble_kl) {
        throw ConfigError("attribute: ensemble estimation needs explicit ensembles; "
                          "use cud_ensemble directly");
    }
    if (estimator == Estimator::exact && !backend.capabilities().exact) {
        throw CapabilityError("attribute: backend does not support exact estimation");
    }

    // Shared full-context query; leave-out queries are independent and may
    // run concurrently. Results land in position-indexed slots so the
    // aggregation order is fixed regardless of completion order.
    std::string full_text = serialize(prompt);
    NextTokenDistribution full_dist;
    SpanScore full_span;
    if (estimator == Estimator::pointwise_kl) {
        full_dist = backend.next_token_distribution(full_text);
    } else if (estimator == Estimator::span_llr) {
        full_span = backend.span_logprob(full_text, options.target_span);
    }

    std::vector<CudEstimate> cuds(parts.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(parts.size()); ++i) {
        const Part& part = parts[static_cast<std::size_t>(i)];
        try {
            CudEstimate e;
            switch (estimator) {
                case Estimator::pointwise_kl: {
                    if (part.member_ids.size() == 1) {
                        e = cud_pointwise_kl(prompt, part.member_ids.front(), backend, &full_dist);
                    } else {
                        std::set<std::string> ids(part.member_ids.begin(), part.member_ids.end());
                        NextTokenDistribution lgo =
                            backend.next_token_distribution(serialize(remove_units(prompt, ids)));
                        KlResult kl = kl_divergence(full_dist, lgo);
                        e.value = kl.nats;
                        e.raw_value = kl.nats;
                        e.estimator = Estimator::pointwise_kl;
                        e.evaluations = 2;
                        e.floored_zero = kl.floored;
                    }
                    break;
                }
                case Estimator::span_llr: {
                    std::set<std::string> ids(part.member_ids.begin(), part.member_ids.end());
                    SpanScore loo = backend.span_logprob(
                        serialize(remove_units(prompt, ids)), options.target_span);
                    e.raw_value = full_span.logprob - loo.logprob;
                    e.value = std::max(e.raw_value, 0.0);
                    e.estimator = Estimator::span_llr;
                    e.evaluations = 2;
                    break;
                }
                case Estimator::exact:
                    e = exact_group_estimate(prompt, part.member_ids, part.label, backend);
                    break;
                default:
                    break;
            }
            e.unit_id = part.label;
            cuds[static_cast<std::size_t>(i)] = std::move(e);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    AttributionResult res = rise_scores(std::move(cuds), options.epsilon, prompt,
                                        options.target_kind);
    res.estimator = estimator;
    return res;
}

} // namespace rise
