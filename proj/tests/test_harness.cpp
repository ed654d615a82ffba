#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rise/corpus.hpp"
#include "rise/errors.hpp"
#include "rise/harness.hpp"
#include "support/stub_server.hpp"
#include "support/test_worlds.hpp"

using namespace rise;

namespace {

std::string data_path(const std::string& name) {
    return std::string(RISE_SOURCE_DIR) + "/data/" + name;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

ExperimentConfig w1_config() {
    ExperimentConfig config;
    config.backend = BackendDescriptor::parse("oracle:" + data_path("w1.world.json"));
    config.corpus_path = data_path("w1_corpus.json");
    return config;
}

} // namespace

TEST_CASE("backend descriptor parsing") {
    BackendDescriptor oracle = BackendDescriptor::parse("oracle:/tmp/w.json");
    CHECK(oracle.kind == BackendDescriptor::Kind::oracle);
    CHECK(oracle.oracle_path == "/tmp/w.json");

    BackendDescriptor http = BackendDescriptor::parse("http://localhost:8000");
    CHECK(http.kind == BackendDescriptor::Kind::http);
    CHECK(http.http.base_url == "http://localhost:8000");

    CHECK_THROWS_AS(BackendDescriptor::parse("ftp://nope"), ConfigError);
    CHECK_THROWS_AS(BackendDescriptor::parse("oracle:"), ConfigError);
}

TEST_CASE("attribution run over the w1 corpus") {
    ExperimentReport rep = run_attribution(w1_config());
    REQUIRE(rep.records.size() == 1);
    const auto& rec = rep.records[0];
    CHECK(rec.at("record") == "attribution");
    CHECK(rec.at("prompt_id") == "w1_prompt");
    REQUIRE(rec.at("scores").size() == 3);
    CHECK(rec.at("scores")[2].at("unit_id") == "U3");
    CHECK(rec.at("scores")[2].at("rise").get<double>() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.aggregate.at("body").at("n_prompts") == 1);
    CHECK(rep.aggregate.at("backend_identity") == "oracle:w1");

    SUBCASE("missing corpus is a config error") {
        ExperimentConfig bad = w1_config();
        bad.corpus_path = "/nonexistent/corpus.json";
        CHECK_THROWS_AS(run_attribution(bad), ConfigError);
    }

    SUBCASE("span targets explain the model's own decode") {
        ExperimentConfig span_config = w1_config();
        span_config.target_kind = TargetKind::span;
        span_config.estimator = Estimator::span_llr;
        ExperimentReport span_rep = run_attribution(span_config);
        const auto& span_rec = span_rep.records[0];
        CHECK(span_rec.at("target_span") == "1");
        CHECK(span_rec.at("target_kind") == "span");
        CHECK(span_rec.at("scores")[2].at("rise").get<double>() ==
              doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("reports round-trip and verify on load") {
        std::string path = temp_path("rise_report_test.jsonl");
        rep.save(path);
        ExperimentReport loaded = ExperimentReport::load(path);
        CHECK(loaded.to_bytes() == rep.to_bytes());
        std::remove(path.c_str());
    }

    SUBCASE("tampered aggregates are rejected") {
        std::string path = temp_path("rise_tampered_test.jsonl");
        ExperimentReport tampered = rep;
        tampered.aggregate["body"]["n_prompts"] = 99;
        tampered.save(path);
        CHECK_THROWS_AS(ExperimentReport::load(path), InvariantError);

        tampered = rep;
        tampered.aggregate["config"]["seed"] = 12345; // breaks the hash
        tampered.save(path);
        CHECK_THROWS_AS(ExperimentReport::load(path), InvariantError);
        std::remove(path.c_str());
    }
}

TEST_CASE("stress run gates variants and aggregates per method") {
    ExperimentConfig config = w1_config();
    config.paraphrase_table_path = data_path("paraphrase_table.json");
    config.stress.duplication_counts = {1, 2, 3};
    config.stress.duplicate_target = "U3";
    config.stress.paraphrase_strengths = {ParaphraseStrength::light, ParaphraseStrength::hard};
    config.stress.paraphrase_target = "U3";
    config.stress.reorder_count = 2;
    config.stress.overlap_fractions = {0.7};
    config.stress.overlap_target = "U3";
    config.seed = 7;

    ExperimentReport rep = run_stress(config);
    const auto& body = rep.aggregate.at("body");
    // The hard paraphrase rewrites U3=a into U3=b and flips the decode.
    CHECK(body.at("n_discarded") == 1);
    CHECK(body.at("n_pairs") == 7);
    CHECK_FALSE(body.at("no_valid_pairs").get<bool>());

    // Redundancy splitting: dependence-aware scores keep duplicate groups
    // fully suppressed; the uniform baseline fragments them.
    const auto& methods = body.at("methods");
    CHECK(methods.at("rise").at("dup_split_mean").get<double>() ==
          doctest::Approx(0.0).epsilon(1e-9));
    CHECK(methods.at("uniform").at("dup_split_mean").get<double>() > 0.4);
    CHECK(methods.at("rise").at("faithfulness_gap_mean").get<double>() > 0.5);
    // The synthetic order-reversed probe must flip the gap's sign.
    CHECK(methods.at("rise_reversed").at("faithfulness_gap_mean").get<double>() < -0.5);
    // Duplication makes every singleton unit redundant, so those variants
    // degenerate and score zero rank stability; the other four are perfect.
    CHECK(methods.at("rise").at("spearman_mean").get<double>() ==
          doctest::Approx(4.0 / 7.0).epsilon(1e-9));
    CHECK(body.at("attention_baseline") == "unavailable");

    // The discarded variant record names its reason.
    bool discarded_found = false;
    for (const auto& rec : rep.records) {
        if (rec.value("record", "") == "variant" && !rec.value("preserved", true)) {
            discarded_found = true;
            CHECK(rec.value("label", "").find("hard") != std::string::npos);
            CHECK_FALSE(rec.contains("methods"));
        }
    }
    CHECK(discarded_found);

    SUBCASE("seeded runs are byte-identical") {
        ExperimentReport again = run_stress(config);
        CHECK(again.to_bytes() == rep.to_bytes());
    }

    SUBCASE("csv export is plot-ready") {
        std::string path = temp_path("rise_csv_test.csv");
        export_csv(rep, path);
        std::ifstream in(path);
        std::string header;
        std::getline(in, header);
        CHECK(header == "scope,id,method,metric,value");
        std::string line;
        int rows = 0;
        while (std::getline(in, line)) ++rows;
        CHECK(rows > 10);
        std::remove(path.c_str());
    }
}

TEST_CASE("a run where every variant flips the output reports no valid pairs") {
    ExperimentConfig config = w1_config();
    config.paraphrase_table_path = data_path("paraphrase_table.json");
    config.stress.paraphrase_strengths = {ParaphraseStrength::hard};
    config.stress.paraphrase_target = "U3";

    ExperimentReport rep = run_stress(config);
    const auto& body = rep.aggregate.at("body");
    CHECK(body.at("n_pairs") == 0);
    CHECK(body.at("n_discarded") == 1);
    CHECK(body.at("no_valid_pairs").get<bool>());
}

TEST_CASE("multi-prompt stress keeps corpus order under the worker pool") {
    ExperimentConfig config;
    config.backend = BackendDescriptor::parse("oracle:" + data_path("w2.world.json"));
    config.corpus_path = data_path("w2_corpus.json"); // two prompts
    config.stress.duplication_counts = {1, 2};
    config.seed = 5;

    ExperimentReport rep = run_stress(config);
    CHECK(rep.aggregate.at("body").at("n_pairs") == 4);
    // Records are emitted grouped per prompt, in corpus order.
    std::vector<std::string> prompt_order;
    for (const auto& rec : rep.records) {
        std::string id = rec.value("prompt_id", rec.value("base_id", ""));
        if (prompt_order.empty() || prompt_order.back() != id) prompt_order.push_back(id);
    }
    CHECK(prompt_order ==
          std::vector<std::string>{"w2_prompt", "w2_prompt_retrieval_miss"});

    ExperimentReport again = run_stress(config);
    CHECK(again.to_bytes() == rep.to_bytes());
}

TEST_CASE("stress runs over http record and replay byte-identically") {
    testing::StubCompletionsServer server(testing::w1_world());
    std::string record_path = temp_path("rise_stress_replay.jsonl");

    ExperimentConfig config;
    config.backend = BackendDescriptor::parse(server.base_url());
    config.backend.http.model = "stub-model";
    config.backend.http.top_k = 4;
    config.backend.http.max_retries = 0;
    config.backend.record_path = record_path;
    config.corpus_path = data_path("w1_corpus.json");
    config.paraphrase_table_path = data_path("paraphrase_table.json");
    config.stress.duplication_counts = {1};
    config.stress.duplicate_target = "U3";
    config.stress.paraphrase_strengths = {ParaphraseStrength::light};
    config.stress.paraphrase_target = "U3";
    config.seed = 3;

    ExperimentReport live = run_stress(config);
    CHECK(live.aggregate.at("body").at("n_pairs") == 2);
    CHECK(live.aggregate.at("body").at("methods").at("rise").at("dup_split_mean")
              .get<double>() == doctest::Approx(0.0).epsilon(1e-9));

    ExperimentConfig replay_config = config;
    replay_config.backend.kind = BackendDescriptor::Kind::replay;
    replay_config.backend.replay_path = record_path;
    replay_config.backend.record_path.clear();
    ExperimentReport replayed = run_stress(replay_config);
    CHECK(replayed.to_bytes() == live.to_bytes());
    std::remove(record_path.c_str());
}

TEST_CASE("selection run emits drift across the corpus order") {
    // Two prompts over the w2 world: the second lacks the informative unit,
    // so its selection goes empty and drift peaks.
    StructuredPrompt a = testing::w2_prompt();
    StructuredPrompt b = remove_units(a, {"U3"});
    b.id = "w2_prompt_no_anchor";
    std::string corpus_path = temp_path("rise_select_corpus.json");
    save_corpus({a, b}, corpus_path);

    ExperimentConfig config;
    config.backend = BackendDescriptor::parse("oracle:" + data_path("w2.world.json"));
    config.corpus_path = corpus_path;
    config.estimator = Estimator::exact;
    config.selector.recent_window = 1;
    config.selector.anchor_budget = 1;

    ExperimentReport rep = run_select(config);
    REQUIRE(rep.records.size() == 2);
    CHECK(rep.records[0].at("selected")[0].at("id") == "U3");
    CHECK(rep.records[0].at("drift_vs_previous").is_null());
    CHECK(rep.records[1].at("selected").empty());
    CHECK(rep.records[1].at("drift_vs_previous").get<double>() == 1.0);
    CHECK(rep.aggregate.at("body").at("mean_drift").get<double>() == 1.0);

    SUBCASE("zero anchor budget yields empty selections and zero drift") {
        config.selector.anchor_budget = 0;
        ExperimentReport r = run_select(config);
        CHECK(r.records[1].at("drift_vs_previous").get<double>() == 0.0);
    }
    std::remove(corpus_path.c_str());
}
