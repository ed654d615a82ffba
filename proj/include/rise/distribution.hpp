#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rise {

// Reserved token id for the mass not covered by a truncated top-k support.
// Network backends attach it when the API returns partial logprobs; KL
// treats it as a single aligned outcome.
inline constexpr std::string_view kOtherToken = "__other__";

// Next-token distribution over an explicit support, natural-log units.
struct NextTokenDistribution {
    std::vector<std::string> support; // unique token identifiers
    std::vector<double> logprobs;     // natural log, aligned with support

    std::size_t size() const { return support.size(); }

    // -1 when absent.
    int index_of(std::string_view token) const;
    // 0.0 when absent.
    double prob_of(std::string_view token) const;

    // Greedy argmax token; ties go to the lexicographically lowest token id.
    std::string argmax_token() const;

    // Support uniqueness plus sum(exp(logprobs)) == 1 within `tol`
    // (1e-9 for exact backends, 1e-6 for renormalized network replies).
    void validate(double tol) const;
};

NextTokenDistribution point_mass(std::string token);
NextTokenDistribution uniform_distribution(std::vector<std::string> support);

struct KlResult {
    double nats = 0.0;
    // True when a zero/absent probability on the second argument was floored
    // at 1e-300 to avoid an infinity.
    bool floored = false;
};

// KL(p || q) over the union of supports. Tokens missing from p contribute
// zero; tokens missing from q are floored (flagged). Remainder buckets are
// aligned against each other as one outcome.
KlResult kl_divergence(const NextTokenDistribution& p, const NextTokenDistribution& q);

// Weighted mixture sum_k w_k p_k over the union of supports. Weights must
// sum to 1 within 1e-9.
NextTokenDistribution mixture(const std::vector<NextTokenDistribution>& components,
                              const std::vector<double>& weights);

// Teacher-forced log-probability of a span under a fixed context.
struct SpanScore {
    std::string target_text;
    int token_count = 1;
    double logprob = 0.0; // natural log, <= 0
};

struct BackendCapabilities {
    bool exact = false; // supports exact CMI via enumeration
    int max_support = 0;
    bool supports_greedy = true;
};

} // namespace rise
