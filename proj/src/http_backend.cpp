#include "rise/http_backend.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "rise/errors.hpp"

namespace rise {

namespace {
constexpr const char* kCompletionsPath = "/v1/completions";
} // namespace

void ReplayLog::record_header(const std::string& path, const HttpBackendConfig& config) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot open replay log for writing: " + path);
    // Everything that shapes request bodies goes into the header so a
    // replayed backend reproduces them byte for byte.
    nlohmann::json header = {{"kind", "header"},
                             {"base_url", config.base_url},
                             {"model", config.model},
                             {"top_k", config.top_k}};
    out << header.dump() << "\n";
}

void ReplayLog::append(const std::string& path, const nlohmann::json& request,
                       const nlohmann::json& response) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw ConfigError("cannot append to replay log: " + path);
    nlohmann::json line = {{"kind", "exchange"}, {"request", request}, {"response", response}};
    out << line.dump() << "\n";
}

ReplayLog ReplayLog::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open replay log: " + path);
    ReplayLog log;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("malformed replay log line in " + path + ": " + e.what());
        }
        std::string kind = j.value("kind", "");
        if (kind == "header") {
            log.base_url_ = j.value("base_url", "");
            log.model_ = j.value("model", "");
            log.top_k_ = j.value("top_k", 20);
        } else if (kind == "exchange") {
            log.exchanges_.emplace(j.at("request").dump(), j.at("response"));
        }
    }
    return log;
}

const nlohmann::json* ReplayLog::lookup(const nlohmann::json& request) const {
    auto it = exchanges_.find(request.dump());
    return it == exchanges_.end() ? nullptr : &it->second;
}

struct HttpBackend::Impl {
    explicit Impl(const HttpBackendConfig& config)
        : client(config.base_url), gate(config.max_in_flight) {
        client.set_connection_timeout(std::chrono::milliseconds(
            static_cast<int>(config.timeout_seconds * 1000)));
        client.set_read_timeout(std::chrono::milliseconds(
            static_cast<int>(config.timeout_seconds * 1000)));
        if (!config.api_key.empty()) {
            client.set_default_headers({{"Authorization", "Bearer " + config.api_key}});
        }
    }
    httplib::Client client;
    std::counting_semaphore<1024> gate;
};

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw ConfigError("http backend requires a base URL");
    if (config_.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    impl_ = std::make_unique<Impl>(config_);
}

HttpBackend::~HttpBackend() = default;

std::unique_ptr<HttpBackend> HttpBackend::from_replay_log(const std::string& path) {
    auto log = std::make_unique<ReplayLog>(ReplayLog::load(path));
    HttpBackendConfig config;
    config.base_url = log->base_url().empty() ? "replay" : log->base_url();
    config.model = log->model().empty() ? "default" : log->model();
    config.top_k = log->top_k();
    auto backend = std::unique_ptr<HttpBackend>(new HttpBackend(std::move(config)));
    backend->replay_ = std::move(log);
    return backend;
}

void HttpBackend::record_to(const std::string& path) {
    record_path_ = path;
    ReplayLog::record_header(path, config_);
}

nlohmann::json HttpBackend::build_request(std::string_view prompt, int max_tokens,
                                          int logprobs, bool echo) const {
    return nlohmann::json{{"model", config_.model},
                          {"prompt", std::string(prompt)},
                          {"max_tokens", max_tokens},
                          {"logprobs", logprobs},
                          {"echo", echo},
                          {"temperature", 0}};
}

nlohmann::json HttpBackend::post_live(const nlohmann::json& request) {
    impl_->gate.acquire();
    struct Release {
        std::counting_semaphore<1024>& gate;
        ~Release() { gate.release(); }
    } release{impl_->gate};

    std::string body = request.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0 && config_.retry_backoff_ms > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(config_.retry_backoff_ms << (attempt - 1)));
        }
        auto res = impl_->client.Post(kCompletionsPath, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue; // transport failure; the request is idempotent
        }
        if (res->status != 200) {
            throw ProtocolError("completions endpoint returned HTTP " +
                                    std::to_string(res->status),
                                res->body);
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("completions reply is not valid JSON: ") + e.what(),
                                res->body);
        }
    }
    throw TransportError("completions request failed after " +
                         std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

nlohmann::json HttpBackend::complete(const nlohmann::json& request) {
    if (replay_) {
        const nlohmann::json* response = replay_->lookup(request);
        if (!response) {
            throw BackendError("replay log has no entry for request: " + request.dump());
        }
        return *response;
    }
    nlohmann::json response = post_live(request);
    if (!record_path_.empty()) {
        std::lock_guard lock(record_mu_);
        ReplayLog::append(record_path_, request, response);
    }
    return response;
}

namespace {

const nlohmann::json& first_choice(const nlohmann::json& reply) {
    if (!reply.contains("choices") || !reply.at("choices").is_array() ||
        reply.at("choices").empty()) {
        throw ProtocolError("completions reply has no choices", reply.dump());
    }
    return reply.at("choices").at(0);
}

} // namespace

NextTokenDistribution HttpBackend::next_token_distribution(std::string_view context) {
    nlohmann::json request = build_request(context, 1, config_.top_k, false);
    nlohmann::json reply = complete(request);
    const nlohmann::json& choice = first_choice(reply);
    if (!choice.contains("logprobs") || !choice.at("logprobs").contains("top_logprobs") ||
        choice.at("logprobs").at("top_logprobs").empty()) {
        throw ProtocolError("completions reply lacks top_logprobs", reply.dump());
    }
    const nlohmann::json& top = choice.at("logprobs").at("top_logprobs").at(0);
    if (!top.is_object() || top.empty()) {
        throw ProtocolError("top_logprobs[0] is not a token->logprob object", reply.dump());
    }

    NextTokenDistribution d;
    double covered = 0.0;
    for (const auto& [token, lp] : top.items()) {
        if (!lp.is_number()) {
            throw ProtocolError("non-numeric logprob for token " + token, reply.dump());
        }
        d.support.push_back(token);
        d.logprobs.push_back(lp.get<double>());
        covered += std::exp(lp.get<double>());
    }
    // Truncated support: park the unreported mass in an explicit bucket,
    // then renormalize so the result is a proper distribution.
    double remainder = 1.0 - covered;
    if (remainder > 1e-12) {
        d.support.emplace_back(kOtherToken);
        d.logprobs.push_back(std::log(remainder));
        covered += remainder;
    }
    double log_total = std::log(covered);
    for (double& lp : d.logprobs) lp -= log_total;
    d.validate(1e-6);
    return d;
}

SpanScore HttpBackend::span_logprob(std::string_view context, std::string_view target) {
    if (target.empty()) throw InvariantError("span_logprob: empty target");
    std::string full = std::string(context) + std::string(target);
    nlohmann::json request = build_request(full, 0, 1, true);
    nlohmann::json reply = complete(request);
    const nlohmann::json& choice = first_choice(reply);
    if (!choice.contains("logprobs")) {
        throw ProtocolError("echo reply lacks logprobs", reply.dump());
    }
    const nlohmann::json& lp = choice.at("logprobs");
    if (!lp.contains("token_logprobs") || !lp.contains("text_offset")) {
        throw ProtocolError("echo reply lacks token_logprobs/text_offset", reply.dump());
    }
    const auto& token_logprobs = lp.at("token_logprobs");
    const auto& text_offset = lp.at("text_offset");
    if (token_logprobs.size() != text_offset.size()) {
        throw ProtocolError("token_logprobs/text_offset length mismatch", reply.dump());
    }

    SpanScore s;
    s.target_text = std::string(target);
    s.token_count = 0;
    s.logprob = 0.0;
    bool boundary_seen = context.empty();
    for (std::size_t i = 0; i < token_logprobs.size(); ++i) {
        auto offset = text_offset.at(i).get<std::size_t>();
        if (offset < context.size()) continue;
        if (offset == context.size()) boundary_seen = true;
        if (!boundary_seen) break;
        if (token_logprobs.at(i).is_null()) {
            throw ProtocolError("null logprob inside the target span", reply.dump());
        }
        s.logprob += token_logprobs.at(i).get<double>();
        ++s.token_count;
    }
    if (!boundary_seen) {
        throw ProtocolError("target span is not token-aligned with the context boundary",
                            reply.dump());
    }
    if (s.token_count == 0) {
        throw ProtocolError("no tokens found for the target span", reply.dump());
    }
    return s;
}

std::string HttpBackend::greedy_decode(std::string_view context, int max_steps) {
    if (max_steps < 1) throw InvariantError("greedy_decode: max_steps must be >= 1");
    nlohmann::json request = build_request(context, max_steps, 0, false);
    nlohmann::json reply = complete(request);
    const nlohmann::json& choice = first_choice(reply);
    if (!choice.contains("text") || !choice.at("text").is_string()) {
        throw ProtocolError("completions reply lacks text", reply.dump());
    }
    return choice.at("text").get<std::string>();
}

BackendCapabilities HttpBackend::capabilities() const {
    return BackendCapabilities{
        .exact = false,
        .max_support = config_.top_k + 1, // plus the remainder bucket
        .supports_greedy = true,
    };
}

std::string HttpBackend::identity() const {
    return "http:" + config_.base_url + " model=" + config_.model;
}

} // namespace rise
