// Command-line harness: attribution, selection, and redundancy stress
// experiments over oracle worlds or OpenAI-compatible completions endpoints.
//
// Exit codes: 0 success, 1 configuration error, 2 backend error,
// 3 invariant violation.

#include <chrono>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rise/errors.hpp"
#include "rise/harness.hpp"
#include "rise/oracle.hpp"
#include "rise/oracle_world.hpp"
#include "rise/util.hpp"

namespace {

struct CliOptions {
    std::string backend_spec;
    std::string replay_log;
    std::string record_log;
    std::string corpus;
    std::string estimator = "pointwise_kl";
    std::string target = "next_token";
    double epsilon = 1e-12;
    int topk = 3;
    int m_removed = 1;
    int horizon = 1;
    double mass_threshold = 1e-6;
    bool include_question = false;
    int L = 0;
    int K = 0;
    bool greedy_conditional = false;
    bool monitor = false;
    std::uint64_t seed = 0;
    std::string out;

    std::vector<int> dup_counts;
    std::string dup_target;
    std::vector<std::string> paraphrase_strengths;
    std::string paraphrase_target;
    int reorders = 0;
    std::vector<double> overlap_fractions;
    std::string overlap_target;
    std::string paraphrase_table;

    std::string model = "default";
    std::string api_key;
    int http_top_k = 20;
    double timeout_seconds = 30.0;
    int max_in_flight = 4;
};

void add_backend_options(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--backend", o.backend_spec,
                    "Backend: oracle:<world.json> or http:<url>")
        ->envname("RISE_BASE_URL");
    cmd->add_option("--replay", o.replay_log, "Serve backend replies from a recorded log");
    cmd->add_option("--record", o.record_log, "Record live exchanges to a replay log");
    cmd->add_option("--model", o.model, "Model name for completions requests");
    cmd->add_option("--api-key", o.api_key, "API key (Authorization: Bearer)")
        ->envname("RISE_API_KEY");
    cmd->add_option("--top-k", o.http_top_k, "Requested logprobs count");
    cmd->add_option("--timeout", o.timeout_seconds, "HTTP timeout in seconds");
    cmd->add_option("--max-in-flight", o.max_in_flight, "Concurrent request bound");
}

void add_run_options(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--corpus", o.corpus, "Prompt corpus JSON")->required();
    cmd->add_option("--estimator", o.estimator, "pointwise_kl or exact");
    cmd->add_option("--target", o.target, "next_token or span");
    cmd->add_option("--epsilon", o.epsilon, "Normalization stabilizer");
    cmd->add_option("--seed", o.seed, "Deterministic run seed");
    cmd->add_option("--out", o.out, "Report output path (JSONL); stdout when omitted");
    cmd->add_option("--horizon", o.horizon, "Greedy-decode horizon");
}

rise::ExperimentConfig build_config(const CliOptions& o) {
    rise::ExperimentConfig config;
    if (!o.replay_log.empty()) {
        config.backend.kind = rise::BackendDescriptor::Kind::replay;
        config.backend.replay_path = o.replay_log;
    } else {
        if (o.backend_spec.empty()) {
            throw rise::ConfigError("--backend (or --replay) is required");
        }
        config.backend = rise::BackendDescriptor::parse(o.backend_spec);
        config.backend.record_path = o.record_log;
        // Live network runs record by default so every report can be
        // replayed without the endpoint.
        if (config.backend.kind == rise::BackendDescriptor::Kind::http &&
            config.backend.record_path.empty() && !o.out.empty()) {
            config.backend.record_path = o.out + ".replay.jsonl";
        }
        config.backend.http.model = o.model;
        config.backend.http.api_key = o.api_key;
        config.backend.http.top_k = o.http_top_k;
        config.backend.http.timeout_seconds = o.timeout_seconds;
        config.backend.http.max_in_flight = o.max_in_flight;
    }
    config.corpus_path = o.corpus;
    config.estimator = rise::estimator_from_string(o.estimator);
    if (o.target == "span") {
        config.target_kind = rise::TargetKind::span;
        config.estimator = rise::Estimator::span_llr;
    } else if (o.target != "next_token") {
        throw rise::ConfigError("--target must be next_token or span");
    }
    config.epsilon = o.epsilon;
    config.seed = o.seed;
    config.paraphrase_table_path = o.paraphrase_table;

    config.metrics.topk = o.topk;
    config.metrics.m_removed = o.m_removed;
    config.metrics.mass_threshold = o.mass_threshold;
    config.metrics.horizon = o.horizon;
    config.metrics.exclude_question_role = !o.include_question;

    config.selector.recent_window = o.L;
    config.selector.anchor_budget = o.K;
    config.selector.greedy_conditional = o.greedy_conditional;
    config.selector.monitor = o.monitor;

    config.stress.duplication_counts = o.dup_counts;
    if (!o.dup_target.empty()) config.stress.duplicate_target = o.dup_target;
    for (const auto& s : o.paraphrase_strengths) {
        config.stress.paraphrase_strengths.push_back(rise::paraphrase_strength_from_string(s));
    }
    if (!o.paraphrase_target.empty()) config.stress.paraphrase_target = o.paraphrase_target;
    config.stress.reorder_count = o.reorders;
    config.stress.overlap_fractions = o.overlap_fractions;
    if (!o.overlap_target.empty()) config.stress.overlap_target = o.overlap_target;
    config.out_path = o.out;
    return config;
}

void emit(const rise::ExperimentReport& report, const CliOptions& o, double elapsed_ms) {
    if (o.out.empty()) {
        std::cout << report.to_bytes();
        return;
    }
    report.save(o.out);
    // Volatile run metadata lives beside the report so reports themselves
    // stay byte-comparable across replays.
    nlohmann::json meta = {{"elapsed_ms", elapsed_ms},
                           {"report", o.out},
                           {"backend_identity", report.aggregate.value("backend_identity", "")}};
    std::ofstream(o.out + ".meta.json") << meta.dump(2) << "\n";
    std::cout << "report written to " << o.out << "\n";
}

int dispatch(const std::string& command, const CliOptions& o) {
    using clock = std::chrono::steady_clock;
    auto start = clock::now();
    rise::ExperimentConfig config = build_config(o);
    rise::ExperimentReport report;
    if (command == "attribute") {
        report = rise::run_attribution(config);
    } else if (command == "stress") {
        report = rise::run_stress(config);
    } else if (command == "select") {
        report = rise::run_select(config);
    }
    double elapsed_ms =
        std::chrono::duration<double, std::milli>(clock::now() - start).count();
    emit(report, o, elapsed_ms);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dependence-aware context attribution harness"};
    app.require_subcommand(1);
    CliOptions o;

    CLI::App* attribute_cmd =
        app.add_subcommand("attribute", "Score per-unit dependence over a corpus");
    add_backend_options(attribute_cmd, o);
    add_run_options(attribute_cmd, o);

    CLI::App* stress_cmd =
        app.add_subcommand("stress", "Redundancy stress suites with preservation gating");
    add_backend_options(stress_cmd, o);
    add_run_options(stress_cmd, o);
    stress_cmd->add_option("--dup-counts", o.dup_counts, "Duplication sweep counts")
        ->delimiter(',');
    stress_cmd->add_option("--dup-target", o.dup_target, "Unit to duplicate");
    stress_cmd->add_option("--paraphrase", o.paraphrase_strengths,
                           "Paraphrase strengths (light,medium,hard)")
        ->delimiter(',');
    stress_cmd->add_option("--paraphrase-target", o.paraphrase_target, "Unit to paraphrase");
    stress_cmd->add_option("--reorders", o.reorders, "Seeded reorder variants");
    stress_cmd->add_option("--overlap-fractions", o.overlap_fractions,
                           "Overlap injection prefix fractions")
        ->delimiter(',');
    stress_cmd->add_option("--overlap-target", o.overlap_target, "Unit to overlap");
    stress_cmd->add_option("--paraphrase-table", o.paraphrase_table,
                           "Checked-in paraphrase substitution table");
    stress_cmd->add_option("--k", o.topk, "Top-k cutoff for overlap stability");
    stress_cmd->add_option("--m-removed", o.m_removed, "Units removed per side");
    stress_cmd->add_option("--mass-threshold", o.mass_threshold,
                           "Group mass floor for split metrics");
    stress_cmd->add_flag("--include-question", o.include_question,
                         "Keep question units removable in the faithfulness check");

    CLI::App* select_cmd =
        app.add_subcommand("select", "Dependence-aware context selection");
    add_backend_options(select_cmd, o);
    add_run_options(select_cmd, o);
    select_cmd->add_option("-L,--L", o.L, "Mandatory recent window size")->required();
    select_cmd->add_option("-K,--K", o.K, "Anchor budget")->required();
    select_cmd->add_flag("--greedy-conditional", o.greedy_conditional,
                         "Re-condition scores on already-selected anchors");
    select_cmd->add_flag("--monitor", o.monitor, "Emit per-prompt anchor drift to stdout");

    CLI::App* report_cmd = app.add_subcommand("report", "Verify and re-aggregate a report");
    std::string report_in, report_csv;
    report_cmd->add_option("--in", report_in, "Report JSONL")->required();
    report_cmd->add_option("--csv", report_csv, "Plot-ready CSV export path");

    CLI::App* oracle_cmd = app.add_subcommand("oracle", "Oracle-world debugging helpers");
    CLI::App* cmi_cmd = oracle_cmd->add_subcommand("cmi", "Exact conditional dependence");
    std::string cmi_unit;
    std::vector<std::string> cmi_given;
    add_backend_options(cmi_cmd, o);
    cmi_cmd->add_option("--unit", cmi_unit, "Attributed variable")->required();
    cmi_cmd->add_option("--given", cmi_given, "Conditioning variables")->delimiter(',');

    try {
        app.parse(argc, argv);

        for (const char* name : {"attribute", "stress", "select"}) {
            if (app.got_subcommand(name)) return dispatch(name, o);
        }
        if (app.got_subcommand("report")) {
            rise::ExperimentReport report = rise::ExperimentReport::load(report_in);
            if (!report_csv.empty()) {
                rise::export_csv(report, report_csv);
                std::cout << "csv written to " << report_csv << "\n";
            }
            std::cout << report.aggregate.dump(2) << "\n";
            return 0;
        }
        if (app.got_subcommand("oracle")) {
            if (o.backend_spec.rfind("oracle:", 0) != 0) {
                throw rise::ConfigError("oracle cmi requires --backend oracle:<path>");
            }
            rise::OracleWorld world = rise::OracleWorld::load_file(o.backend_spec.substr(7));
            int var = world.require_var(cmi_unit);
            std::vector<int> cond;
            for (const auto& name : cmi_given) cond.push_back(world.require_var(name));
            double nats = rise::exact_cmi(world, var, cond);
            std::cout << "I(" << cmi_unit << "; Y | {";
            for (std::size_t i = 0; i < cmi_given.size(); ++i) {
                std::cout << (i ? "," : "") << cmi_given[i];
            }
            std::cout << "}) = " << nats << " nats\n";
            return 0;
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const rise::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const rise::InvariantError& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return 3;
    } catch (const rise::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
