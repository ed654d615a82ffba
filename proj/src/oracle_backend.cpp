#include "rise/oracle_backend.hpp"

#include <cctype>
#include <cmath>
#include <limits>

#include "rise/errors.hpp"
#include "rise/util.hpp"

namespace rise {

namespace {

bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

} // namespace

OracleBackend::OracleBackend(OracleWorld world) : world_(std::move(world)) {
    world_.validate();
}

Observation OracleBackend::parse_observations(std::string_view context) const {
    Observation obs(world_.variables.size(), -1);
    std::size_t i = 0;
    const std::size_t n = context.size();
    while (i < n) {
        if (!ident_char(context[i])) {
            ++i;
            continue;
        }
        std::size_t name_begin = i;
        while (i < n && ident_char(context[i])) ++i;
        std::string_view name = context.substr(name_begin, i - name_begin);
        if (i >= n || context[i] != '=') continue;
        ++i; // consume '='
        std::size_t val_begin = i;
        while (i < n && ident_char(context[i])) ++i;
        std::string_view value = context.substr(val_begin, i - val_begin);

        int var = world_.var_index(name);
        if (var < 0 || value.empty()) continue;
        int sym = world_.symbol_index(var, value);
        if (sym < 0) continue;
        int& slot = obs[static_cast<std::size_t>(var)];
        if (slot >= 0 && slot != sym) {
            throw OracleError("contradictory observations for variable '" +
                              std::string(name) + "' in world '" + world_.name + "'");
        }
        slot = sym;
    }
    return obs;
}

NextTokenDistribution OracleBackend::next_token_distribution(std::string_view context) {
    auto posterior = exact_posterior(world_, parse_observations(context));
    NextTokenDistribution d;
    d.support = world_.target_alphabet;
    d.logprobs.resize(posterior.size());
    for (std::size_t i = 0; i < posterior.size(); ++i) {
        d.logprobs[i] = posterior[i] > 0.0
                            ? std::log(posterior[i])
                            : -std::numeric_limits<double>::infinity();
    }
    d.validate(1e-9);
    return d;
}

SpanScore OracleBackend::span_logprob(std::string_view context, std::string_view target) {
    if (target.empty()) throw InvariantError("span_logprob: empty target");
    auto posterior = exact_posterior(world_, parse_observations(context));

    SpanScore s;
    s.target_text = std::string(target);
    s.token_count = 0;
    s.logprob = 0.0;
    for (const auto& token : split(std::string(target), " ")) {
        if (token.empty()) continue;
        int y = world_.target_symbol_index(token);
        if (y < 0) {
            throw OracleError("span token '" + token + "' is not in the target alphabet of '" +
                              world_.name + "'");
        }
        double p = posterior[static_cast<std::size_t>(y)];
        s.logprob += p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
        ++s.token_count;
    }
    if (s.token_count == 0) throw InvariantError("span_logprob: target has no tokens");
    return s;
}

std::string OracleBackend::greedy_decode(std::string_view context, int max_steps) {
    if (max_steps < 1) throw InvariantError("greedy_decode: max_steps must be >= 1");
    // Memoryless emission: every step has the same posterior.
    std::string token = next_token_distribution(context).argmax_token();
    std::string out = token;
    for (int step = 1; step < max_steps; ++step) {
        out += ' ';
        out += token;
    }
    return out;
}

BackendCapabilities OracleBackend::capabilities() const {
    return BackendCapabilities{
        .exact = true,
        .max_support = static_cast<int>(world_.target_alphabet.size()),
        .supports_greedy = true,
    };
}

} // namespace rise
