#include "rise/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "rise/baselines.hpp"
#include "rise/corpus.hpp"
#include "rise/errors.hpp"
#include "rise/metrics.hpp"
#include "rise/oracle_backend.hpp"
#include "rise/selector.hpp"
#include "rise/util.hpp"

namespace rise {

BackendDescriptor BackendDescriptor::parse(const std::string& spec) {
    BackendDescriptor d;
    if (spec.rfind("oracle:", 0) == 0) {
        d.kind = Kind::oracle;
        d.oracle_path = spec.substr(7);
        if (d.oracle_path.empty()) throw ConfigError("empty oracle world path");
        return d;
    }
    if (spec.rfind("http:", 0) == 0 || spec.rfind("https:", 0) == 0) {
        d.kind = Kind::http;
        d.http.base_url = spec;
        return d;
    }
    throw ConfigError("backend must be oracle:<path> or http:<url>, got '" + spec + "'");
}

nlohmann::json ExperimentConfig::effective_json(const std::string& backend_identity) const {
    nlohmann::json j;
    j["backend_identity"] = backend_identity;
    j["corpus"] = corpus_path;
    j["estimator"] = std::string(to_string(estimator));
    j["target_kind"] = std::string(to_string(target_kind));
    j["epsilon"] = epsilon;
    j["seed"] = seed;
    j["paraphrase_table"] = paraphrase_table_path;
    nlohmann::json stress_json;
    stress_json["duplication_counts"] = stress.duplication_counts;
    if (stress.duplicate_target) stress_json["duplicate_target"] = *stress.duplicate_target;
    nlohmann::json strengths = nlohmann::json::array();
    for (auto s : stress.paraphrase_strengths) strengths.push_back(std::string(to_string(s)));
    stress_json["paraphrase_strengths"] = std::move(strengths);
    if (stress.paraphrase_target) stress_json["paraphrase_target"] = *stress.paraphrase_target;
    stress_json["reorder_count"] = stress.reorder_count;
    stress_json["overlap_fractions"] = stress.overlap_fractions;
    if (stress.overlap_target) stress_json["overlap_target"] = *stress.overlap_target;
    j["stress"] = std::move(stress_json);
    j["selector"] = {{"L", selector.recent_window},
                     {"K", selector.anchor_budget},
                     {"greedy_conditional", selector.greedy_conditional}};
    j["metrics"] = {{"k", metrics.topk},
                    {"m_removed", metrics.m_removed},
                    {"mass_threshold", metrics.mass_threshold},
                    {"horizon", metrics.horizon},
                    {"exclude_question_role", metrics.exclude_question_role},
                    {"position_decay", metrics.position_decay}};
    return j;
}

std::string config_hash(const nlohmann::json& effective_config) {
    return fnv1a64_hex(effective_config.dump());
}

std::string ExperimentReport::to_bytes() const {
    std::string out;
    for (const auto& r : records) {
        out += r.dump();
        out += "\n";
    }
    out += aggregate.dump();
    out += "\n";
    return out;
}

void ExperimentReport::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw ConfigError("cannot write report file: " + path);
    out << to_bytes();
}

namespace {

nlohmann::json mean_or_null(const std::vector<double>& values) {
    if (values.empty()) return nullptr;
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

} // namespace

nlohmann::json recompute_aggregate_body(const std::vector<nlohmann::json>& records,
                                        const std::string& kind) {
    nlohmann::json body;
    if (kind == "attribute") {
        int n = 0, degenerate = 0;
        for (const auto& r : records) {
            if (r.value("record", "") != "attribution") continue;
            ++n;
            if (r.value("degenerate", false)) ++degenerate;
        }
        body["n_prompts"] = n;
        body["n_degenerate"] = degenerate;
        return body;
    }
    if (kind == "select") {
        int n = 0, shortfall = 0;
        std::vector<double> drifts;
        for (const auto& r : records) {
            if (r.value("record", "") != "selection") continue;
            ++n;
            shortfall += r.value("shortfall", 0);
            if (r.contains("drift_vs_previous") && !r.at("drift_vs_previous").is_null()) {
                drifts.push_back(r.at("drift_vs_previous").get<double>());
            }
        }
        body["n_prompts"] = n;
        body["total_shortfall"] = shortfall;
        body["mean_drift"] = mean_or_null(drifts);
        return body;
    }
    if (kind == "stress") {
        int n_pairs = 0, n_discarded = 0;
        std::map<std::string, std::map<std::string, std::vector<double>>> per_method;
        for (const auto& r : records) {
            std::string rec = r.value("record", "");
            if (rec == "variant") {
                if (!r.value("preserved", false)) {
                    ++n_discarded;
                    continue;
                }
                ++n_pairs;
                if (!r.contains("methods")) continue;
                for (const auto& [method, metrics_json] : r.at("methods").items()) {
                    for (const auto& [metric, value] : metrics_json.items()) {
                        if (value.is_number()) {
                            per_method[method][metric].push_back(value.get<double>());
                        }
                    }
                }
            } else if (rec == "faithfulness") {
                if (r.value("skipped", false)) continue;
                per_method[r.at("method").get<std::string>()]["faithfulness_gap"].push_back(
                    r.at("gap").get<double>());
            }
        }
        body["n_pairs"] = n_pairs;
        body["n_discarded"] = n_discarded;
        body["no_valid_pairs"] = (n_pairs == 0);
        nlohmann::json methods = nlohmann::json::object();
        for (const auto& [method, metric_map] : per_method) {
            nlohmann::json mj = nlohmann::json::object();
            for (const auto& [metric, values] : metric_map) {
                mj[metric + "_mean"] = mean_or_null(values);
                mj[metric + "_n"] = values.size();
            }
            methods[method] = std::move(mj);
        }
        body["methods"] = std::move(methods);
        // The attention baseline needs model internals the backend contract
        // does not expose; reports carry the column as explicitly absent.
        body["attention_baseline"] = "unavailable";
        return body;
    }
    throw InvariantError("unknown aggregate kind: " + kind);
}

ExperimentReport ExperimentReport::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open report file: " + path);
    ExperimentReport rep;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("malformed report line in " + path + ": " + e.what());
        }
        if (j.value("record", "") == "aggregate") {
            if (!rep.aggregate.is_null()) {
                throw InvariantError("report has multiple aggregate records");
            }
            rep.aggregate = std::move(j);
        } else {
            rep.records.push_back(std::move(j));
        }
    }
    if (rep.aggregate.is_null()) throw InvariantError("report has no aggregate record");

    // Config-hash integrity.
    std::string embedded_hash = rep.aggregate.value("config_hash", "");
    if (embedded_hash != config_hash(rep.aggregate.at("config"))) {
        throw InvariantError("report config hash mismatch; refusing to load");
    }
    // Aggregates must be recomputable from the per-prompt records.
    nlohmann::json expected =
        recompute_aggregate_body(rep.records, rep.aggregate.value("kind", ""));
    if (rep.aggregate.at("body") != expected) {
        throw InvariantError("report aggregate is inconsistent with its records");
    }
    return rep;
}

namespace {

// Re-raises the in-flight exception with the prompt named, preserving the
// type so CLI exit codes stay correct.
std::exception_ptr wrap_prompt_failure(const std::string& prompt_id) {
    auto tag = [&](const char* what) { return "prompt '" + prompt_id + "': " + what; };
    try {
        throw;
    } catch (const ConfigError& e) {
        return std::make_exception_ptr(ConfigError(tag(e.what())));
    } catch (const TransportError& e) {
        return std::make_exception_ptr(TransportError(tag(e.what())));
    } catch (const ProtocolError& e) {
        return std::make_exception_ptr(ProtocolError(tag(e.what()), e.raw_payload));
    } catch (const CapabilityError& e) {
        return std::make_exception_ptr(CapabilityError(tag(e.what())));
    } catch (const OracleError& e) {
        return std::make_exception_ptr(OracleError(tag(e.what())));
    } catch (const BackendError& e) {
        return std::make_exception_ptr(BackendError(tag(e.what())));
    } catch (const InvariantError& e) {
        return std::make_exception_ptr(InvariantError(tag(e.what())));
    } catch (const std::exception& e) {
        return std::make_exception_ptr(Error(tag(e.what())));
    } catch (...) {
        return std::current_exception();
    }
}

} // namespace

std::shared_ptr<ModelBackend> make_backend(const BackendDescriptor& descriptor) {
    std::shared_ptr<ModelBackend> inner;
    switch (descriptor.kind) {
        case BackendDescriptor::Kind::oracle:
            inner = std::make_shared<OracleBackend>(OracleWorld::load_file(descriptor.oracle_path));
            break;
        case BackendDescriptor::Kind::http: {
            auto http = std::make_shared<HttpBackend>(descriptor.http);
            if (!descriptor.record_path.empty()) http->record_to(descriptor.record_path);
            inner = std::move(http);
            break;
        }
        case BackendDescriptor::Kind::replay:
            inner = HttpBackend::from_replay_log(descriptor.replay_path);
            break;
    }
    return std::make_shared<CachedBackend>(std::move(inner));
}

namespace {

nlohmann::json make_aggregate(const ExperimentConfig& config, const std::string& kind,
                              const std::string& backend_identity,
                              const std::vector<nlohmann::json>& records) {
    nlohmann::json effective = config.effective_json(backend_identity);
    nlohmann::json agg;
    agg["record"] = "aggregate";
    agg["kind"] = kind;
    agg["config"] = effective;
    agg["config_hash"] = config_hash(effective);
    agg["backend_identity"] = backend_identity;
    agg["body"] = recompute_aggregate_body(records, kind);
    return agg;
}

std::map<std::string, double> score_map(const AttributionResult& res) {
    std::map<std::string, double> m;
    for (const auto& row : res.rows) m[row.unit_id] = row.rise;
    return m;
}

std::map<std::string, double> score_map(const BaselineAttribution& b) {
    std::map<std::string, double> m;
    for (std::size_t i = 0; i < b.unit_ids.size(); ++i) m[b.unit_ids[i]] = b.normalized[i];
    return m;
}

// Per-method normalized scores for one prompt. "rise" uses the configured
// estimator/target; baselines are always span-based or structural.
std::map<std::string, std::map<std::string, double>>
method_scores(const StructuredPrompt& prompt, const std::string& span,
              ModelBackend& backend, const ExperimentConfig& config,
              std::vector<nlohmann::json>* emit_records) {
    std::map<std::string, std::map<std::string, double>> out;

    AttributeOptions opts;
    opts.estimator = config.estimator;
    opts.target_kind = config.target_kind;
    opts.epsilon = config.epsilon;
    if (config.target_kind == TargetKind::span) opts.target_span = span;
    AttributionResult rise_res = attribute(prompt, backend, opts);
    rise_res.validate();
    out["rise"] = score_map(rise_res);
    if (emit_records) {
        nlohmann::json rec = rise_res.to_json();
        rec["record"] = "attribution";
        rec["method"] = "rise";
        emit_records->push_back(std::move(rec));
    }

    BaselineAttribution louo = louo_logprob_drop(prompt, span, backend);
    BaselineAttribution uni = uniform_baseline(prompt);
    BaselineAttribution decay = position_decay_baseline(prompt, config.metrics.position_decay);
    out["louo"] = score_map(louo);
    out["uniform"] = score_map(uni);
    out["position_decay"] = score_map(decay);
    if (emit_records) {
        for (const auto* b : {&louo, &uni, &decay}) {
            nlohmann::json rec = b->to_json();
            rec["record"] = "baseline";
            emit_records->push_back(std::move(rec));
        }
    }

    // Synthetic order-reversed scores: a sign probe for the faithfulness
    // diagnostic (a faithful metric must go negative on them).
    double max_score = 0.0;
    for (const auto& [id, s] : out["rise"]) max_score = std::max(max_score, s);
    std::map<std::string, double> reversed;
    double total = 0.0;
    for (const auto& [id, s] : out["rise"]) {
        reversed[id] = max_score - s;
        total += reversed[id];
    }
    for (auto& [id, s] : reversed) s = total > 1e-11 ? s / total : 0.0;
    out["rise_reversed"] = std::move(reversed);
    return out;
}

} // namespace

ExperimentReport run_attribution(const ExperimentConfig& config) {
    auto backend = make_backend(config.backend);
    auto corpus = load_corpus(config.corpus_path);
    if (corpus.empty()) throw ConfigError("corpus is empty: " + config.corpus_path);

    std::vector<nlohmann::json> per_prompt(corpus.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(corpus.size()); ++i) {
        try {
            const auto& prompt = corpus[static_cast<std::size_t>(i)];
            AttributeOptions opts;
            opts.estimator = config.estimator;
            opts.target_kind = config.target_kind;
            opts.epsilon = config.epsilon;
            std::string span;
            if (config.target_kind == TargetKind::span) {
                span = backend->greedy_decode(serialize(prompt), config.metrics.horizon);
                opts.target_span = span;
            }
            AttributionResult res = attribute(prompt, *backend, opts);
            res.validate();
            nlohmann::json rec = res.to_json();
            rec["record"] = "attribution";
            rec["method"] = "rise";
            if (!span.empty()) rec["target_span"] = span;
            per_prompt[static_cast<std::size_t>(i)] = std::move(rec);
        } catch (...) {
            std::exception_ptr wrapped =
                wrap_prompt_failure(corpus[static_cast<std::size_t>(i)].id);
#pragma omp critical
            if (!failure) failure = wrapped;
        }
    }
    if (failure) std::rethrow_exception(failure);

    ExperimentReport rep;
    rep.records.assign(per_prompt.begin(), per_prompt.end());
    rep.aggregate = make_aggregate(config, "attribute", backend->identity(), rep.records);
    return rep;
}

ExperimentReport run_stress(const ExperimentConfig& config) {
    if (config.stress.empty()) throw ConfigError("stress run requires suite parameters");
    auto backend = make_backend(config.backend);
    auto corpus = load_corpus(config.corpus_path);
    if (corpus.empty()) throw ConfigError("corpus is empty: " + config.corpus_path);

    ParaphraseTable table;
    if (!config.paraphrase_table_path.empty()) {
        table = ParaphraseTable::load_file(config.paraphrase_table_path);
    }
    StressSuiteConfig suite_config = config.stress;
    suite_config.seed = config.seed;

    std::vector<std::vector<nlohmann::json>> per_prompt(corpus.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t pi = 0; pi < static_cast<std::int64_t>(corpus.size()); ++pi) {
        try {
            const auto& prompt = corpus[static_cast<std::size_t>(pi)];
            auto& records = per_prompt[static_cast<std::size_t>(pi)];

            std::string span = backend->greedy_decode(serialize(prompt), config.metrics.horizon);
            auto base_scores = method_scores(prompt, span, *backend, config, &records);

            // Intervention check on the base prompt, per method.
            for (const auto& [method, scores] : base_scores) {
                nlohmann::json rec = {{"record", "faithfulness"},
                                      {"prompt_id", prompt.id},
                                      {"method", method}};
                FaithfulnessOptions fopts;
                fopts.m_removed = config.metrics.m_removed;
                fopts.exclude_question_role = config.metrics.exclude_question_role;
                int removable = 0;
                for (const auto& u : prompt.units) {
                    if (fopts.exclude_question_role && u.role == Role::question) continue;
                    ++removable;
                }
                if (2 * fopts.m_removed > removable) {
                    rec["skipped"] = true;
                    rec["reason"] = "2*m_removed exceeds removable units";
                } else {
                    FaithfulnessReport fr =
                        faithfulness_gap(prompt, scores, span, *backend, fopts);
                    rec["gap"] = fr.gap;
                    rec["drop_top"] = fr.drop_top;
                    rec["drop_bottom"] = fr.drop_bottom;
                    rec["m_removed"] = fr.m_removed;
                }
                records.push_back(std::move(rec));
            }

            std::set<std::string> base_ids;
            for (const auto& u : prompt.units) base_ids.insert(u.id);

            for (const auto& variant : generate_stress_suite(prompt, suite_config, &table)) {
                nlohmann::json rec = {{"record", "variant"},
                                      {"base_id", prompt.id},
                                      {"variant_id", variant.prompt.id},
                                      {"label", variant.spec.label()},
                                      {"spec", variant.spec.to_json()}};
                bool preserved =
                    output_preserved(prompt, variant.prompt, *backend, config.metrics.horizon);
                rec["preserved"] = preserved;
                if (!preserved) {
                    rec["discard_reason"] = "output not preserved";
                    records.push_back(std::move(rec));
                    continue;
                }

                auto variant_scores = method_scores(variant.prompt, span, *backend, config,
                                                    nullptr);
                nlohmann::json methods = nlohmann::json::object();
                auto dup_groups = duplicate_groups_of(variant.prompt);
                auto ov_groups = overlap_groups_of(variant.prompt);
                for (const auto& [method, vscores] : variant_scores) {
                    const auto& bscores = base_scores.at(method);
                    std::vector<double> base_vec, var_vec;
                    for (const auto& u : prompt.units) {
                        base_vec.push_back(bscores.at(u.id));
                        var_vec.push_back(vscores.at(u.id));
                    }
                    double injected_mass = 0.0;
                    for (const auto& [id, s] : vscores) {
                        if (!base_ids.count(id)) injected_mass += s;
                    }
                    nlohmann::json mj;
                    if (base_vec.size() >= 2) {
                        mj["spearman"] = spearman_rank_stability(base_vec, var_vec);
                        int k = std::min<int>(config.metrics.topk,
                                              static_cast<int>(base_vec.size()));
                        mj["topk"] = topk_overlap(base_vec, var_vec, k);
                    }
                    mj["injected_mass"] = injected_mass;
                    if (!dup_groups.empty()) {
                        mj["dup_split"] =
                            dup_split(vscores, dup_groups, config.metrics.mass_threshold).value;
                    }
                    if (!ov_groups.empty()) {
                        mj["split_index"] =
                            split_index(vscores, ov_groups, config.metrics.mass_threshold).value;
                    }
                    methods[method] = std::move(mj);
                }
                rec["methods"] = std::move(methods);
                records.push_back(std::move(rec));
            }
        } catch (...) {
            std::exception_ptr wrapped =
                wrap_prompt_failure(corpus[static_cast<std::size_t>(pi)].id);
#pragma omp critical
            if (!failure) failure = wrapped;
        }
    }
    if (failure) std::rethrow_exception(failure);

    ExperimentReport rep;
    for (auto& records : per_prompt) {
        for (auto& r : records) rep.records.push_back(std::move(r));
    }
    rep.aggregate = make_aggregate(config, "stress", backend->identity(), rep.records);
    return rep;
}

ExperimentReport run_select(const ExperimentConfig& config) {
    auto backend = make_backend(config.backend);
    auto corpus = load_corpus(config.corpus_path);
    if (corpus.empty()) throw ConfigError("corpus is empty: " + config.corpus_path);

    SelectorConfig sel;
    sel.recent_window = config.selector.recent_window;
    sel.anchor_budget = config.selector.anchor_budget;
    sel.estimator = config.estimator;
    sel.greedy_conditional = config.selector.greedy_conditional;

    ExperimentReport rep;
    const SelectionResult* previous = nullptr;
    std::vector<SelectionResult> results;
    results.reserve(corpus.size());
    for (const auto& prompt : corpus) {
        results.push_back(select_context(prompt, sel, *backend));
        SelectionResult& cur = results.back();
        nlohmann::json rec = cur.to_json();
        rec["record"] = "selection";
        if (previous) {
            double drift = anchor_drift(*previous, cur);
            rec["drift_vs_previous"] = drift;
            if (config.selector.monitor) {
                std::cout << "drift " << prompt.id << " " << drift << "\n";
            }
        } else {
            rec["drift_vs_previous"] = nullptr;
        }
        rep.records.push_back(std::move(rec));
        previous = &cur;
    }
    rep.aggregate = make_aggregate(config, "select", backend->identity(), rep.records);
    return rep;
}

void export_csv(const ExperimentReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write CSV file: " + path);
    out << "scope,id,method,metric,value\n";
    auto emit = [&](const std::string& scope, const std::string& id, const std::string& method,
                    const std::string& metric, const nlohmann::json& value) {
        if (!value.is_number()) return;
        out << scope << "," << id << "," << method << "," << metric << ","
            << value.dump() << "\n";
    };
    for (const auto& r : report.records) {
        std::string rec = r.value("record", "");
        if (rec == "variant" && r.contains("methods")) {
            for (const auto& [method, metrics_json] : r.at("methods").items()) {
                for (const auto& [metric, value] : metrics_json.items()) {
                    emit("variant", r.value("variant_id", ""), method, metric, value);
                }
            }
        } else if (rec == "faithfulness" && r.contains("gap")) {
            emit("prompt", r.value("prompt_id", ""), r.value("method", ""), "faithfulness_gap",
                 r.at("gap"));
        } else if (rec == "selection") {
            if (r.contains("drift_vs_previous")) {
                emit("prompt", r.value("prompt_id", ""), "selector", "drift",
                     r.at("drift_vs_previous"));
            }
        }
    }
    if (report.aggregate.contains("body")) {
        const auto& body = report.aggregate.at("body");
        if (body.contains("methods")) {
            for (const auto& [method, metrics_json] : body.at("methods").items()) {
                for (const auto& [metric, value] : metrics_json.items()) {
                    emit("aggregate", "all", method, metric, value);
                }
            }
        }
        if (body.contains("mean_drift")) {
            emit("aggregate", "all", "selector", "mean_drift", body.at("mean_drift"));
        }
    }
}

} // namespace rise
