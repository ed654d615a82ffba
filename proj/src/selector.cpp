#include "rise/selector.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "rise/errors.hpp"
#include "rise/oracle_backend.hpp"

namespace rise {

nlohmann::json SelectionResult::to_json() const {
    nlohmann::json j;
    j["prompt_id"] = prompt_id;
    j["L"] = recent_window;
    j["K"] = anchor_budget;
    j["recent"] = recent;
    j["selected"] = nlohmann::json::array();
    for (const auto& id : selected) {
        double score = 0.0;
        for (const auto& c : candidates) {
            if (c.unit_id == id) score = c.score;
        }
        j["selected"].push_back({{"id", id}, {"score", score}});
    }
    j["candidates"] = nlohmann::json::array();
    for (const auto& c : candidates) {
        j["candidates"].push_back({{"id", c.unit_id}, {"score", c.score}});
    }
    j["shortfall"] = shortfall;
    if (!warnings.empty()) j["warnings"] = warnings;
    return j;
}

namespace {

StructuredPrompt subset_prompt(const StructuredPrompt& prompt,
                               const std::set<std::string>& keep) {
    std::set<std::string> drop;
    for (const auto& u : prompt.units) {
        if (!keep.count(u.id)) drop.insert(u.id);
    }
    return remove_units(prompt, drop);
}

// Exact restricted dependence I(C_cand; Y | C_recent) over world variables.
double exact_restricted(const OracleBackend& oracle, const StructuredPrompt& prompt,
                        const std::string& candidate_id,
                        const std::vector<std::string>& recent_ids) {
    std::vector<int> attr_vars;
    std::vector<int> cond_vars;
    for (const auto& u : prompt.units) {
        Observation obs = oracle.parse_observations(u.text);
        std::vector<int>* sink = nullptr;
        if (u.id == candidate_id) {
            sink = &attr_vars;
        } else if (std::find(recent_ids.begin(), recent_ids.end(), u.id) != recent_ids.end()) {
            sink = &cond_vars;
        }
        if (!sink) continue;
        for (std::size_t i = 0; i < obs.size(); ++i) {
            if (obs[i] >= 0) sink->push_back(static_cast<int>(i));
        }
    }
    std::vector<int> reduced;
    for (int v : attr_vars) {
        if (std::find(cond_vars.begin(), cond_vars.end(), v) == cond_vars.end() &&
            std::find(reduced.begin(), reduced.end(), v) == reduced.end()) {
            reduced.push_back(v);
        }
    }
    if (reduced.empty()) return 0.0;
    return exact_cmi_group(oracle.world(), reduced, cond_vars);
}

} // namespace

CudEstimate restricted_cud(const StructuredPrompt& prompt, const std::string& candidate_id,
                           const std::vector<std::string>& recent_ids, ModelBackend& backend,
                           Estimator estimator) {
    if (!prompt.has_unit(candidate_id)) {
        throw InvariantError("restricted_cud: unknown candidate '" + candidate_id + "'");
    }
    for (const auto& id : recent_ids) {
        if (id == candidate_id) {
            throw InvariantError("restricted_cud: candidate is inside the recent window");
        }
        if (!prompt.has_unit(id)) {
            throw InvariantError("restricted_cud: unknown recent unit '" + id + "'");
        }
    }

    CudEstimate e;
    e.unit_id = candidate_id;
    if (estimator == Estimator::exact) {
        auto* oracle = unwrap_oracle(backend);
        if (!oracle) throw CapabilityError("exact restricted scores need an oracle backend");
        e.estimator = Estimator::exact;
        e.value = exact_restricted(*oracle, prompt, candidate_id, recent_ids);
        e.raw_value = e.value;
        return e;
    }
    if (estimator != Estimator::pointwise_kl) {
        throw ConfigError("restricted_cud supports pointwise_kl and exact estimators");
    }
    std::set<std::string> recent_set(recent_ids.begin(), recent_ids.end());
    std::set<std::string> with_candidate = recent_set;
    with_candidate.insert(candidate_id);
    NextTokenDistribution with =
        backend.next_token_distribution(serialize(subset_prompt(prompt, with_candidate)));
    NextTokenDistribution without =
        backend.next_token_distribution(serialize(subset_prompt(prompt, recent_set)));
    KlResult kl = kl_divergence(with, without);
    e.estimator = Estimator::pointwise_kl;
    e.value = kl.nats;
    e.raw_value = kl.nats;
    e.evaluations = 2;
    e.floored_zero = kl.floored;
    return e;
}

AttributionResult restricted_rise(const StructuredPrompt& prompt,
                                  const std::vector<std::string>& recent_ids,
                                  ModelBackend& backend, Estimator estimator,
                                  double epsilon) {
    std::set<std::string> recent_set(recent_ids.begin(), recent_ids.end());
    std::vector<CudEstimate> cuds;
    for (const auto& u : prompt.units) {
        if (recent_set.count(u.id)) continue;
        cuds.push_back(restricted_cud(prompt, u.id, recent_ids, backend, estimator));
    }
    if (cuds.empty()) throw InvariantError("restricted_rise: no candidates outside the window");
    return rise_scores(std::move(cuds), epsilon, prompt, TargetKind::next_token);
}

SelectionResult select_context(const StructuredPrompt& prompt, const SelectorConfig& config,
                               ModelBackend& backend) {
    if (config.recent_window < 0 || config.anchor_budget < 0) {
        throw ConfigError("select_context: L and K must be non-negative");
    }
    SelectionResult res;
    res.prompt_id = prompt.id;
    res.recent_window = config.recent_window;
    res.anchor_budget = config.anchor_budget;

    int L = config.recent_window;
    int m = static_cast<int>(prompt.units.size());
    if (L > m) {
        res.warnings.push_back("recent window L=" + std::to_string(L) +
                               " exceeds m=" + std::to_string(m) + "; clipped");
        L = m;
    }
    for (int i = 0; i < L; ++i) res.recent.push_back(prompt.units[static_cast<std::size_t>(i)].id);

    struct Scored {
        std::string id;
        int position;
        double score;
    };
    std::vector<Scored> pool;
    for (int i = L; i < m; ++i) {
        const auto& u = prompt.units[static_cast<std::size_t>(i)];
        pool.push_back(Scored{u.id, u.position, 0.0});
    }

    auto rank = [](std::vector<Scored>& v) {
        std::sort(v.begin(), v.end(), [](const Scored& a, const Scored& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.position < b.position; // earlier context wins ties
        });
    };

    // Reported candidate scores are always the window-restricted ones; the
    // greedy mode keeps its re-conditioned scores internal to the ranking.
    for (auto& c : pool) {
        c.score = restricted_cud(prompt, c.id, res.recent, backend, config.estimator).value;
    }
    if (config.greedy_conditional) {
        // Re-score the remaining pool against recent + already-selected
        // anchors each round, so overlapping candidates screen each other.
        std::vector<std::string> conditioning = res.recent;
        std::vector<Scored> remaining = pool;
        while (static_cast<int>(res.selected.size()) < config.anchor_budget &&
               !remaining.empty()) {
            for (auto& c : remaining) {
                c.score = restricted_cud(prompt, c.id, conditioning, backend,
                                         config.estimator).value;
            }
            rank(remaining);
            const Scored& best = remaining.front();
            if (best.score <= config.positive_threshold && !config.pad_below_threshold) break;
            res.selected.push_back(best.id);
            conditioning.push_back(best.id);
            remaining.erase(remaining.begin());
        }
    } else {
        std::vector<Scored> ranked = pool;
        rank(ranked);
        for (const auto& c : ranked) {
            if (static_cast<int>(res.selected.size()) >= config.anchor_budget) break;
            if (c.score <= config.positive_threshold && !config.pad_below_threshold) continue;
            res.selected.push_back(c.id);
        }
    }

    res.shortfall = std::max(0, std::min(config.anchor_budget, static_cast<int>(pool.size())) -
                                    static_cast<int>(res.selected.size()));

    std::sort(pool.begin(), pool.end(),
              [](const Scored& a, const Scored& b) { return a.position < b.position; });
    for (const auto& c : pool) res.candidates.push_back(CandidateScore{c.id, c.score});

    std::set<std::string> keep(res.recent.begin(), res.recent.end());
    keep.insert(res.selected.begin(), res.selected.end());
    res.reduced_prompt = subset_prompt(prompt, keep);
    res.reduced_prompt.id = prompt.id + "#reduced";
    return res;
}

double anchor_drift(const std::vector<std::string>& previous,
                    const std::vector<std::string>& current) {
    std::set<std::string> a(previous.begin(), previous.end());
    std::set<std::string> b(current.begin(), current.end());
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    std::size_t uni = a.size() + b.size() - inter;
    return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

double anchor_drift(const SelectionResult& previous, const SelectionResult& current) {
    return anchor_drift(previous.selected, current.selected);
}

} // namespace rise
