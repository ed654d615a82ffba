#include "rise/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_set>

#include "rise/errors.hpp"

namespace rise {

namespace {
constexpr double kProbFloor = 1e-300;
}

int NextTokenDistribution::index_of(std::string_view token) const {
    for (std::size_t i = 0; i < support.size(); ++i) {
        if (support[i] == token) return static_cast<int>(i);
    }
    return -1;
}

double NextTokenDistribution::prob_of(std::string_view token) const {
    int idx = index_of(token);
    return idx < 0 ? 0.0 : std::exp(logprobs[idx]);
}

std::string NextTokenDistribution::argmax_token() const {
    if (support.empty()) throw InvariantError("argmax of empty distribution");
    std::size_t best = 0;
    for (std::size_t i = 1; i < support.size(); ++i) {
        if (logprobs[i] > logprobs[best] ||
            (logprobs[i] == logprobs[best] && support[i] < support[best])) {
            best = i;
        }
    }
    return support[best];
}

void NextTokenDistribution::validate(double tol) const {
    if (support.size() != logprobs.size()) {
        throw InvariantError("distribution support/logprob length mismatch");
    }
    if (support.empty()) throw InvariantError("empty distribution support");
    std::unordered_set<std::string_view> seen;
    double total = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) {
        if (!seen.insert(support[i]).second) {
            throw InvariantError("duplicate token in distribution support: " + support[i]);
        }
        if (std::isnan(logprobs[i]) || logprobs[i] > 1e-12) {
            throw InvariantError("invalid logprob for token " + support[i]);
        }
        total += std::exp(logprobs[i]);
    }
    if (std::abs(total - 1.0) > tol) {
        throw InvariantError("distribution mass " + std::to_string(total) +
                             " not within tolerance of 1");
    }
}

NextTokenDistribution point_mass(std::string token) {
    NextTokenDistribution d;
    d.support.push_back(std::move(token));
    d.logprobs.push_back(0.0);
    return d;
}

NextTokenDistribution uniform_distribution(std::vector<std::string> support) {
    NextTokenDistribution d;
    double lp = -std::log(static_cast<double>(support.size()));
    d.logprobs.assign(support.size(), lp);
    d.support = std::move(support);
    return d;
}

namespace {

// Union-of-supports alignment as probability vectors, ordered by token id so
// the result is independent of the inputs' support ordering.
std::map<std::string, std::pair<double, double>>
align(const NextTokenDistribution& p, const NextTokenDistribution& q) {
    std::map<std::string, std::pair<double, double>> m;
    for (std::size_t i = 0; i < p.support.size(); ++i) {
        m[p.support[i]].first = std::exp(p.logprobs[i]);
    }
    for (std::size_t i = 0; i < q.support.size(); ++i) {
        m[q.support[i]].second = std::exp(q.logprobs[i]);
    }
    return m;
}

} // namespace

KlResult kl_divergence(const NextTokenDistribution& p, const NextTokenDistribution& q) {
    KlResult r;
    for (const auto& [token, pq] : align(p, q)) {
        double pv = pq.first;
        double qv = pq.second;
        if (pv <= 0.0) continue;
        if (qv < kProbFloor) {
            qv = kProbFloor;
            r.floored = true;
        }
        r.nats += pv * std::log(pv / qv);
    }
    // Enumeration round-off can leave a tiny negative residue.
    if (r.nats < 0.0 && r.nats > -1e-12) r.nats = 0.0;
    return r;
}

NextTokenDistribution mixture(const std::vector<NextTokenDistribution>& components,
                              const std::vector<double>& weights) {
    if (components.empty() || components.size() != weights.size()) {
        throw InvariantError("mixture: component/weight mismatch");
    }
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw InvariantError("mixture: negative weight");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9) {
        throw InvariantError("mixture: weights sum to " + std::to_string(wsum));
    }
    std::map<std::string, double> mass;
    for (std::size_t k = 0; k < components.size(); ++k) {
        const auto& c = components[k];
        for (std::size_t i = 0; i < c.support.size(); ++i) {
            mass[c.support[i]] += weights[k] * std::exp(c.logprobs[i]);
        }
    }
    NextTokenDistribution out;
    for (const auto& [token, m] : mass) {
        out.support.push_back(token);
        out.logprobs.push_back(m > 0.0 ? std::log(m)
                                       : -std::numeric_limits<double>::infinity());
    }
    return out;
}

} // namespace rise
