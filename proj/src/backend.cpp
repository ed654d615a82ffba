#include "rise/backend.hpp"

namespace rise {

namespace {
// Cache keys embed a length prefix so context/target concatenations
// cannot collide.
std::string span_key(std::string_view context, std::string_view target) {
    return std::to_string(context.size()) + ":" + std::string(context) + std::string(target);
}
} // namespace

NextTokenDistribution CachedBackend::next_token_distribution(std::string_view context) {
    std::string key(context);
    {
        std::lock_guard lock(mu_);
        auto it = dist_cache_.find(key);
        if (it != dist_cache_.end()) {
            ++hits_;
            return it->second;
        }
    }
    NextTokenDistribution d = inner_->next_token_distribution(context);
    std::lock_guard lock(mu_);
    ++misses_;
    return dist_cache_.emplace(std::move(key), std::move(d)).first->second;
}

SpanScore CachedBackend::span_logprob(std::string_view context, std::string_view target) {
    std::string key = span_key(context, target);
    {
        std::lock_guard lock(mu_);
        auto it = span_cache_.find(key);
        if (it != span_cache_.end()) {
            ++hits_;
            return it->second;
        }
    }
    SpanScore s = inner_->span_logprob(context, target);
    std::lock_guard lock(mu_);
    ++misses_;
    return span_cache_.emplace(std::move(key), std::move(s)).first->second;
}

std::string CachedBackend::greedy_decode(std::string_view context, int max_steps) {
    std::string key = std::to_string(max_steps) + ":" + std::string(context);
    {
        std::lock_guard lock(mu_);
        auto it = decode_cache_.find(key);
        if (it != decode_cache_.end()) {
            ++hits_;
            return it->second;
        }
    }
    std::string s = inner_->greedy_decode(context, max_steps);
    std::lock_guard lock(mu_);
    ++misses_;
    return decode_cache_.emplace(std::move(key), std::move(s)).first->second;
}

std::size_t CachedBackend::hits() const {
    std::lock_guard lock(mu_);
    return hits_;
}

std::size_t CachedBackend::misses() const {
    std::lock_guard lock(mu_);
    return misses_;
}

} // namespace rise
