// Acceptance suite: one check per criterion, one PASS/FAIL line each.
// Exact oracles stand in for dataset-scale runs; every tolerance is pinned
// in code. Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rise/attribution.hpp"
#include "rise/baselines.hpp"
#include "rise/corpus.hpp"
#include "rise/harness.hpp"
#include "rise/metrics.hpp"
#include "rise/oracle_backend.hpp"
#include "rise/selector.hpp"
#include "support/stub_server.hpp"
#include "support/test_worlds.hpp"

using namespace rise;

namespace {

constexpr double kLn2 = 0.6931471805599453;

int g_failures = 0;
std::vector<AttributionResult> g_results; // pooled for criterion 4

void record(const AttributionResult& res) { g_results.push_back(res); }

void criterion(int number, const std::string& name, const std::function<void()>& body) {
    try {
        body();
        std::printf("[PASS] criterion %2d: %s\n", number, name.c_str());
    } catch (const std::exception& e) {
        ++g_failures;
        std::printf("[FAIL] criterion %2d: %s\n        %s\n", number, name.c_str(), e.what());
    }
    std::fflush(stdout);
}

void require(bool ok, const std::string& message) {
    if (!ok) throw std::runtime_error(message);
}

void require_close(double actual, double expected, double tol, const std::string& what) {
    if (!(std::abs(actual - expected) <= tol)) {
        std::ostringstream os;
        os << what << ": got " << actual << ", expected " << expected << " +/- " << tol;
        throw std::runtime_error(os.str());
    }
}

std::string data_path(const std::string& name) {
    return std::string(RISE_SOURCE_DIR) + "/data/" + name;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void criterion_oracle_equivalence() {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        testing::RandomWorldOptions opt;
        opt.min_units = 2;
        opt.max_units = 4;
        opt.max_alphabet = 4;
        opt.max_target_alphabet = 4;
        OracleWorld w = testing::random_world(rng, opt);
        OracleBackend backend(w);

        int var = static_cast<int>(rng() % w.variables.size());
        std::vector<int> others;
        for (std::size_t i = 0; i < w.variables.size(); ++i) {
            if (static_cast<int>(i) != var) others.push_back(static_cast<int>(i));
        }
        const auto& v = w.variables[static_cast<std::size_t>(var)];

        // Full conditional ensemble at each realization of the rest, then
        // the outer average against the rest's law.
        double averaged = 0.0;
        if (others.empty()) {
            std::vector<int> values(w.variables.size(), 0);
            StructuredPrompt prompt = testing::prompt_for_world(w, values);
            auto law = conditional_unit_law(w, var, {});
            ReplacementEnsemble ensemble;
            for (std::size_t s = 0; s < law.size(); ++s) {
                ensemble.members.push_back({v.name + "=" + v.alphabet[s], law[s]});
            }
            averaged = cud_ensemble(prompt, v.name, ensemble, backend).value;
        } else {
            for (const auto& [assignment, prob] : enumerate_marginal(w, others)) {
                if (prob <= 0.0) continue;
                std::vector<int> values(w.variables.size(), 0);
                Observation realized(w.variables.size(), -1);
                for (std::size_t k = 0; k < others.size(); ++k) {
                    values[static_cast<std::size_t>(others[k])] = assignment[k];
                    realized[static_cast<std::size_t>(others[k])] = assignment[k];
                }
                StructuredPrompt prompt = testing::prompt_for_world(w, values);
                auto law = conditional_unit_law(w, var, realized);
                ReplacementEnsemble ensemble;
                for (std::size_t s = 0; s < law.size(); ++s) {
                    ensemble.members.push_back({v.name + "=" + v.alphabet[s], law[s]});
                }
                averaged += prob * cud_ensemble(prompt, v.name, ensemble, backend).value;
            }
        }
        require_close(averaged, exact_cmi(w, var, others), 1e-9,
                      "ensemble estimate vs exact value (trial " + std::to_string(trial) + ")");
    }
}

void criterion_duplicate_invariance() {
    std::mt19937_64 rng(202);
    for (int trial = 0; trial < 100; ++trial) {
        testing::RandomWorldOptions opt;
        opt.min_units = 2;
        opt.max_units = 3;
        opt.plant_copy = true;       // copy of U1 appended last
        opt.strong_dependence = true; // U1 is genuinely informative
        OracleWorld w = testing::random_world(rng, opt);
        OracleBackend backend(w);

        int source = w.require_var("U1");
        int copy = static_cast<int>(w.variables.size()) - 1;
        std::vector<int> rest_of_source, rest_of_copy, rest_of_pair;
        for (std::size_t i = 0; i < w.variables.size(); ++i) {
            int idx = static_cast<int>(i);
            if (idx != source) rest_of_source.push_back(idx);
            if (idx != copy) rest_of_copy.push_back(idx);
            if (idx != source && idx != copy) rest_of_pair.push_back(idx);
        }
        require(exact_cmi(w, source, rest_of_source) < 1e-9,
                "copy source must carry no unique dependence");
        require(exact_cmi(w, copy, rest_of_copy) < 1e-9,
                "copy must carry no unique dependence");
        require(exact_cmi_group(w, {source, copy}, rest_of_pair) > 1e-9,
                "informative duplicated pair must carry positive joint dependence");

        StructuredPrompt prompt = testing::prompt_for_world(w);
        require(cud_pointwise_kl(prompt, w.variables[static_cast<std::size_t>(source)].name,
                                 backend).value < 1e-9,
                "pointwise estimate must vanish on the copy source");
        require(cud_pointwise_kl(prompt, w.variables[static_cast<std::size_t>(copy)].name,
                                 backend).value < 1e-9,
                "pointwise estimate must vanish on the copy");
    }
}

void criterion_redundancy_injection() {
    std::mt19937_64 rng(303);
    for (int trial = 0; trial < 100; ++trial) {
        testing::RandomWorldOptions opt;
        opt.min_units = 2;
        opt.max_units = 4;
        opt.plant_noise = true; // independent unit "N" outside the target parents
        opt.strong_dependence = true;
        OracleWorld w = testing::random_world(rng, opt);
        OracleBackend backend(w);

        StructuredPrompt with_noise = testing::prompt_for_world(w);
        StructuredPrompt base = remove_units(with_noise, {"N"});

        AttributeOptions opts;
        opts.estimator = Estimator::exact;
        AttributionResult before = attribute(base, backend, opts);
        AttributionResult after = attribute(with_noise, backend, opts);
        record(before);
        record(after);

        for (const auto& row : before.rows) {
            double cud_after = 0.0, rise_after = 0.0;
            for (const auto& r : after.rows) {
                if (r.unit_id == row.unit_id) {
                    cud_after = r.cud;
                    rise_after = r.rise;
                }
            }
            require_close(cud_after, row.cud, 1e-9, "exact dependence under injection");
            require_close(rise_after, row.rise, 1e-9, "normalized score under injection");
        }
        require(after.score_of("N") < 1e-9, "injected unit must score zero");
    }
}

void criterion_normalization() {
    require(!g_results.empty(), "no attribution results pooled");
    int checked = 0;
    for (const auto& res : g_results) {
        double sum = 0.0;
        for (const auto& row : res.rows) {
            require(row.rise >= 0.0, "negative normalized score");
            require(row.cud >= 0.0, "negative dependence value");
            sum += row.rise;
        }
        if (res.degenerate) {
            require(sum == 0.0, "degenerate result with nonzero scores");
        } else {
            require_close(sum, 1.0, 1e-9, "score mass");
        }
        ++checked;
    }
    std::printf("        (%d attribution results checked)\n", checked);
}

void criterion_selector() {
    std::mt19937_64 rng(404);
    for (int trial = 0; trial < 100; ++trial) {
        OracleWorld w = testing::random_w2_class(rng);
        OracleBackend backend(w);
        std::vector<int> values;
        for (const auto& v : w.variables) {
            values.push_back(static_cast<int>(rng() % v.alphabet.size()));
        }
        values[1] = values[0]; // the copy must match its source
        StructuredPrompt prompt = testing::prompt_for_world(w, values);

        SelectorConfig config;
        config.recent_window = 1;
        config.anchor_budget = 1;
        config.estimator = Estimator::exact;
        SelectionResult res = select_context(prompt, config, backend);
        require(res.selected == std::vector<std::string>{"U3"},
                "selector must pick the informative anchor (trial " +
                    std::to_string(trial) + ")");
    }

    // Tagged fast/long-range worlds: with K >= |anchors|, every positively
    // scored anchor is selected and the window is always retained.
    for (double noise : {0.05, 0.1, 0.2, 0.3, 0.4}) {
        OracleWorld w = testing::decomposition_world(noise);
        OracleBackend backend(w);
        StructuredPrompt prompt = testing::decomposition_prompt();
        SelectorConfig config;
        config.recent_window = 1;
        config.anchor_budget = static_cast<int>(w.tags.anchors.size());
        config.estimator = Estimator::exact;
        SelectionResult res = select_context(prompt, config, backend);
        require(res.recent == std::vector<std::string>{"U1"}, "recent window retained");
        for (const auto& anchor : w.tags.anchors) {
            double score = restricted_cud(prompt, anchor, res.recent, backend,
                                          Estimator::exact).value;
            if (score > 1e-9) {
                require(std::find(res.selected.begin(), res.selected.end(), anchor) !=
                            res.selected.end(),
                        "positively scored anchor " + anchor + " must be selected");
            }
        }
    }
}

void criterion_chain_decomposition() {
    std::mt19937_64 rng(505);
    for (int trial = 0; trial < 100; ++trial) {
        testing::RandomWorldOptions opt;
        opt.min_units = 3;
        opt.max_units = 4;
        OracleWorld w = testing::random_world(rng, opt);
        int n = static_cast<int>(w.variables.size());

        int group_size = 2 + static_cast<int>(rng() % 2);
        group_size = std::min(group_size, n);
        std::vector<int> all(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
        std::vector<int> group(all.begin(), all.begin() + group_size);
        std::vector<int> rest(all.begin() + group_size, all.end());

        double joint = exact_cmi_group(w, group, rest);
        for (int ordering = 0; ordering < 5; ++ordering) {
            std::vector<int> order = group;
            for (std::size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[rng() % i]);
            }
            double sum = 0.0;
            std::vector<int> conditioning = rest;
            for (int member : order) {
                sum += exact_cmi(w, member, conditioning);
                conditioning.push_back(member);
            }
            require_close(sum, joint, 1e-9,
                          "chain decomposition (trial " + std::to_string(trial) + ")");
        }
    }
}

void criterion_faithfulness_sign() {
    OracleBackend backend(testing::w1_world());
    StructuredPrompt p = testing::w1_prompt();

    AttributeOptions opts;
    AttributionResult res = attribute(p, backend, opts);
    record(res);
    std::map<std::string, double> scores;
    for (const auto& row : res.rows) scores[row.unit_id] = row.rise;

    FaithfulnessOptions fopts;
    fopts.m_removed = 1;
    FaithfulnessReport fwd = faithfulness_gap(p, scores, "1", backend, fopts);
    require_close(fwd.gap, kLn2, 1e-9, "faithfulness gap with dependence-aware scores");

    std::map<std::string, double> reversed;
    for (const auto& [id, s] : scores) reversed[id] = 1.0 - s;
    FaithfulnessReport rev = faithfulness_gap(p, reversed, "1", backend, fopts);
    require_close(rev.gap, -kLn2, 1e-9, "faithfulness gap with reversed scores");
}

void criterion_dup_split() {
    OracleBackend backend(testing::w1_world());
    StructuredPrompt p = testing::w1_prompt();

    for (int copies = 1; copies <= 3; ++copies) {
        VariantSpec spec;
        spec.kind = VariantKind::duplicate;
        spec.target_unit = "U3";
        spec.copy_count = copies;
        PromptVariant v = apply_variant(p, spec);
        require(output_preserved(p, v.prompt, backend, 1), "duplication preserves the output");

        AttributeOptions opts;
        AttributionResult res = attribute(v.prompt, backend, opts);
        record(res);
        std::map<std::string, double> scores;
        for (const auto& row : res.rows) scores[row.unit_id] = row.rise;
        auto groups = duplicate_groups_of(v.prompt);
        require(groups.size() == 1 && groups[0].size() == static_cast<std::size_t>(copies) + 1,
                "duplicate group must cover the sweep");

        double rise_split = dup_split(scores, groups, 1e-6).value;
        require_close(rise_split, 0.0, 1e-12,
                      "dependence-aware split at " + std::to_string(copies) + " copies");

        std::map<std::string, double> uniform_scores;
        BaselineAttribution uni = uniform_baseline(v.prompt);
        for (std::size_t i = 0; i < uni.unit_ids.size(); ++i) {
            uniform_scores[uni.unit_ids[i]] = uni.normalized[i];
        }
        double uniform_split = dup_split(uniform_scores, groups, 1e-6).value;
        if (copies == 1) {
            require_close(uniform_split, 0.5, 1e-12, "uniform baseline split on a pair");
        }
        require(rise_split < uniform_split, "dependence-aware split must be strictly lower");
    }
}

void criterion_metric_units() {
    require_close(spearman_rank_stability({1, 2, 3}, {2, 1, 3}), 0.5, 1e-12, "spearman");
    require_close(topk_overlap({5, 4, 3, 2, 1}, {1, 5, 4, 3, 2}, 3), 2.0 / 3.0, 1e-12,
                  "top-3 overlap");
    require_close(anchor_drift(std::vector<std::string>{"3", "5"}, std::vector<std::string>{"3", "7"}), 2.0 / 3.0, 1e-12, "anchor drift");
}

void criterion_network_contract() {
    testing::StubCompletionsServer server(testing::w1_world());

    HttpBackendConfig http;
    http.base_url = server.base_url();
    http.model = "stub-model";
    http.top_k = 4;
    http.max_retries = 0;
    http.retry_backoff_ms = 0;

    // Wire format, field for field.
    {
        HttpBackend probe(http);
        probe.next_token_distribution("U1=a");
        nlohmann::json req = server.last_request();
        require(req.size() == 6, "request must carry exactly the documented fields");
        require(req.at("model") == "stub-model", "model field");
        require(req.at("prompt") == "U1=a", "prompt field");
        require(req.at("max_tokens") == 1, "max_tokens field");
        require(req.at("logprobs") == 4, "logprobs field");
        require(req.at("echo") == false, "echo field");
        require(req.at("temperature") == 0, "temperature field");
    }

    std::string record_path = temp_path("rise_acceptance_replay.jsonl");
    std::string live_out = temp_path("rise_acceptance_live.jsonl");
    std::string replay_out = temp_path("rise_acceptance_replayed.jsonl");

    ExperimentConfig config;
    config.backend = BackendDescriptor::parse(server.base_url());
    config.backend.http.model = "stub-model";
    config.backend.http.top_k = 4;
    config.backend.http.max_retries = 0;
    config.backend.record_path = record_path;
    config.corpus_path = data_path("w1_corpus.json");

    ExperimentReport live = run_attribution(config);
    live.save(live_out);
    ExperimentReport verified = ExperimentReport::load(live_out); // schema + hash + consistency
    require(verified.records.size() == 1, "report must carry one record per prompt");
    for (const auto& rec : verified.records) {
        require(rec.contains("prompt_id") && rec.contains("scores") &&
                    rec.contains("estimator") && rec.contains("degenerate"),
                "attribution record schema");
        double sum = 0.0;
        for (const auto& s : rec.at("scores")) sum += s.at("rise").get<double>();
        require(std::abs(sum - 1.0) <= 1e-9 || rec.at("degenerate").get<bool>(),
                "report scores must normalize");
    }

    ExperimentConfig replay_config = config;
    replay_config.backend.kind = BackendDescriptor::Kind::replay;
    replay_config.backend.replay_path = record_path;
    replay_config.backend.record_path.clear();
    ExperimentReport replayed = run_attribution(replay_config);
    replayed.save(replay_out);

    require(live.to_bytes() == replayed.to_bytes(), "replayed report must be bit-identical");

    std::remove(record_path.c_str());
    std::remove(live_out.c_str());
    std::remove(replay_out.c_str());
}

void criterion_preservation_gating() {
    ExperimentConfig config;
    config.backend = BackendDescriptor::parse("oracle:" + data_path("w1.world.json"));
    config.corpus_path = data_path("w1_corpus.json");
    config.paraphrase_table_path = data_path("paraphrase_table.json");
    config.stress.duplication_counts = {1};
    config.stress.duplicate_target = "U3";
    // The hard entry rewrites U3=a into U3=b: same world, flipped decode.
    config.stress.paraphrase_strengths = {ParaphraseStrength::light, ParaphraseStrength::hard};
    config.stress.paraphrase_target = "U3";
    config.seed = 7;

    ExperimentReport rep = run_stress(config);
    const auto& body = rep.aggregate.at("body");
    require(body.at("n_discarded").get<int>() == 1, "flipping variant must be discarded");
    require(body.at("n_pairs").get<int>() == 2, "preserved variants must be counted");

    int preserved_with_methods = 0;
    for (const auto& rec : rep.records) {
        if (rec.value("record", "") != "variant") continue;
        if (rec.value("preserved", false)) {
            require(rec.contains("methods"), "preserved variants carry method metrics");
            ++preserved_with_methods;
        } else {
            require(!rec.contains("methods"),
                    "discarded variants must not enter stability metrics");
            require(rec.value("label", "").find("hard") != std::string::npos,
                    "the flipped variant is the hard paraphrase");
        }
    }
    require(preserved_with_methods == 2, "exactly the preserved variants are scored");
    require(body.at("methods").at("rise").at("spearman_n").get<int>() ==
                body.at("n_pairs").get<int>(),
            "stability aggregates use exactly the preserved pairs");

    // Pool the run's attribution records for the normalization criterion.
    for (const auto& rec : rep.records) {
        if (rec.value("record", "") != "attribution") continue;
        double sum = 0.0;
        for (const auto& s : rec.at("scores")) sum += s.at("rise").get<double>();
        require(std::abs(sum - 1.0) <= 1e-9 || rec.at("degenerate").get<bool>(),
                "stress-run attribution must normalize");
    }
}

} // namespace

int main() {
    std::printf("acceptance suite (exact oracle scale)\n");

    criterion(1, "oracle equivalence: ensemble estimator matches exact CMI on 200 worlds",
              criterion_oracle_equivalence);
    criterion(2, "duplicate invariance: planted copies score zero, the pair stays positive",
              criterion_duplicate_invariance);
    criterion(3, "redundancy-injection stability: independent units change nothing",
              criterion_redundancy_injection);
    criterion(5, "selector correctness: informative anchors in, duplicates and noise out",
              criterion_selector);
    criterion(6, "chain decomposition: group dependence equals ordered increments",
              criterion_chain_decomposition);
    criterion(7, "faithfulness sign: +ln2 for dependence-aware scores, -ln2 reversed",
              criterion_faithfulness_sign);
    criterion(8, "dup-split: zero under dependence-aware scores, 0.5 for uniform pairs",
              criterion_dup_split);
    criterion(9, "metric unit values: spearman 0.5, top-3 overlap 2/3, drift 2/3",
              criterion_metric_units);
    criterion(10, "network contract: wire format, schema-valid report, bit-identical replay",
              criterion_network_contract);
    criterion(11, "output-preservation gating: flipped variants excluded from aggregates",
              criterion_preservation_gating);
    // Runs last so it sweeps every result the other criteria produced.
    criterion(4, "normalization and non-negativity over all pooled attribution results",
              criterion_normalization);

    if (g_failures == 0) {
        std::printf("all acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d acceptance criteria FAILED\n", g_failures);
    return 1;
}
