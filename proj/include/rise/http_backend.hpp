#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "rise/backend.hpp"

namespace rise {

// OpenAI-compatible completions client. Every request POSTs the same six
// fields (model, prompt, max_tokens, logprobs, echo, temperature) to
// base_url + /v1/completions and reads the standard `logprobs` reply
// structure. Truncated top-k supports are completed with an explicit
// remainder bucket and renormalized.
struct HttpBackendConfig {
    std::string base_url; // e.g. http://127.0.0.1:8080
    std::string api_key;  // sent as Authorization: Bearer when non-empty
    std::string model = "default";
    int top_k = 20;         // logprobs count requested for distributions
    double timeout_seconds = 30.0;
    int max_in_flight = 4;  // concurrent request bound
    int max_retries = 3;    // transport-level retries (requests are idempotent)
    int retry_backoff_ms = 50; // doubles per attempt
};

// Request/response exchange log. Live runs can record every exchange;
// replay runs answer from the log without a network, bit-identically.
class ReplayLog {
public:
    static void record_header(const std::string& path, const HttpBackendConfig& config);
    static void append(const std::string& path, const nlohmann::json& request,
                       const nlohmann::json& response);
    static ReplayLog load(const std::string& path);

    const nlohmann::json* lookup(const nlohmann::json& request) const;
    const std::string& base_url() const { return base_url_; }
    const std::string& model() const { return model_; }
    int top_k() const { return top_k_; }

private:
    std::map<std::string, nlohmann::json> exchanges_; // canonical request -> response
    std::string base_url_;
    std::string model_;
    int top_k_ = 20;
};

class HttpBackend : public ModelBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    ~HttpBackend() override;

    // Replay-mode backend: serves responses from a recorded log.
    static std::unique_ptr<HttpBackend> from_replay_log(const std::string& path);

    // Record every live exchange to `path` (JSONL, header first).
    void record_to(const std::string& path);

    NextTokenDistribution next_token_distribution(std::string_view context) override;
    SpanScore span_logprob(std::string_view context, std::string_view target) override;
    std::string greedy_decode(std::string_view context, int max_steps) override;
    BackendCapabilities capabilities() const override;
    std::string identity() const override;

private:
    nlohmann::json build_request(std::string_view prompt, int max_tokens, int logprobs,
                                 bool echo) const;
    nlohmann::json complete(const nlohmann::json& request);
    nlohmann::json post_live(const nlohmann::json& request);

    HttpBackendConfig config_;
    std::unique_ptr<ReplayLog> replay_;
    std::string record_path_;
    std::mutex record_mu_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace rise
