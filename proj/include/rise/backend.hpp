#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include "rise/distribution.hpp"

namespace rise {

// Uniform contract for autoregressive models. Implementations must be safe
// for concurrent use; all returned values are immutable snapshots.
class ModelBackend {
public:
    virtual ~ModelBackend() = default;

    // Distribution over the next token given a serialized context
    // (empty context is legal: the unconditional distribution).
    virtual NextTokenDistribution next_token_distribution(std::string_view context) = 0;

    // Sum of per-token teacher-forced log-probabilities of `target` after
    // `context`. Target must be non-empty.
    virtual SpanScore span_logprob(std::string_view context, std::string_view target) = 0;

    // Deterministic argmax decoding; ties go to the lowest token identifier.
    virtual std::string greedy_decode(std::string_view context, int max_steps) = 0;

    virtual BackendCapabilities capabilities() const = 0;

    // Stable identity string recorded in reports (e.g. "oracle:w1").
    virtual std::string identity() const = 0;

    // Wrappers (caches, instrumentation) expose what they wrap so exact
    // estimators can reach the oracle underneath.
    virtual ModelBackend* delegate() const { return nullptr; }
};

// Memoizing wrapper. Transparent: cached and uncached results are
// bit-identical for identical requests.
class CachedBackend : public ModelBackend {
public:
    explicit CachedBackend(std::shared_ptr<ModelBackend> inner)
        : inner_(std::move(inner)) {}

    NextTokenDistribution next_token_distribution(std::string_view context) override;
    SpanScore span_logprob(std::string_view context, std::string_view target) override;
    std::string greedy_decode(std::string_view context, int max_steps) override;
    BackendCapabilities capabilities() const override { return inner_->capabilities(); }
    std::string identity() const override { return inner_->identity(); }
    ModelBackend* delegate() const override { return inner_.get(); }

    std::size_t hits() const;
    std::size_t misses() const;

private:
    std::shared_ptr<ModelBackend> inner_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, NextTokenDistribution> dist_cache_;
    std::unordered_map<std::string, SpanScore> span_cache_;
    std::unordered_map<std::string, std::string> decode_cache_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
};

} // namespace rise
