#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rise/attribution.hpp"
#include "rise/backend.hpp"
#include "rise/http_backend.hpp"
#include "rise/variants.hpp"

namespace rise {

struct BackendDescriptor {
    enum class Kind { oracle, http, replay };
    Kind kind = Kind::oracle;
    std::string oracle_path;   // oracle:<path>
    HttpBackendConfig http;    // http:<url>
    std::string replay_path;   // serve responses from this log
    std::string record_path;   // record live exchanges to this log

    // Parses "oracle:<path>" / "http:<url>".
    static BackendDescriptor parse(const std::string& spec);
};

struct MetricsParams {
    int topk = 3;
    int m_removed = 1;
    double mass_threshold = 1e-6;
    int horizon = 1; // greedy-decode horizon for preservation and span targets
    bool exclude_question_role = true;
    double position_decay = 0.5;
};

struct SelectorParams {
    int recent_window = 0; // L
    int anchor_budget = 0; // K
    bool greedy_conditional = false;
    bool monitor = false; // echo per-prompt drift to stdout
};

struct ExperimentConfig {
    BackendDescriptor backend;
    std::string corpus_path;
    Estimator estimator = Estimator::pointwise_kl;
    TargetKind target_kind = TargetKind::next_token;
    double epsilon = 1e-12;
    StressSuiteConfig stress;
    std::string paraphrase_table_path;
    SelectorParams selector;
    MetricsParams metrics;
    std::uint64_t seed = 0;
    std::string out_path;

    // Canonical semantic config embedded in reports: excludes volatile
    // transport details (record/replay paths, output path) so a replayed
    // run hashes identically to the live run it mirrors.
    nlohmann::json effective_json(const std::string& backend_identity) const;
};

std::string config_hash(const nlohmann::json& effective_config);

// Line-delimited report: per-prompt/per-variant records followed by one
// aggregate object. Aggregates are recomputable from the records; load()
// verifies both that and the embedded config hash.
struct ExperimentReport {
    std::vector<nlohmann::json> records;
    nlohmann::json aggregate;

    std::string to_bytes() const;
    void save(const std::string& path) const;
    static ExperimentReport load(const std::string& path);
};

// Recompute the aggregate's derived section from the records; used by the
// runners to build it and by load() to reject inconsistent files.
nlohmann::json recompute_aggregate_body(const std::vector<nlohmann::json>& records,
                                        const std::string& kind);

std::shared_ptr<ModelBackend> make_backend(const BackendDescriptor& descriptor);

ExperimentReport run_attribution(const ExperimentConfig& config);
ExperimentReport run_stress(const ExperimentConfig& config);
ExperimentReport run_select(const ExperimentConfig& config);

void export_csv(const ExperimentReport& report, const std::string& path);

} // namespace rise
