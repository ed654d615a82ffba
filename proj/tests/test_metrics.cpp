#include <doctest.h>

#include <cmath>
#include <random>

#include "rise/errors.hpp"
#include "rise/metrics.hpp"
#include "rise/oracle_backend.hpp"
#include "rise/variants.hpp"
#include "support/test_worlds.hpp"

using namespace rise;

namespace {
constexpr double kLn2 = 0.6931471805599453;
}

TEST_CASE("output preservation gates on exact decode equality") {
    OracleBackend backend(testing::w1_world());
    StructuredPrompt p = testing::w1_prompt();

    CHECK(output_preserved(p, p, backend, 1));

    VariantSpec dup;
    dup.kind = VariantKind::duplicate;
    dup.target_unit = "U3";
    CHECK(output_preserved(p, apply_variant(p, dup).prompt, backend, 2));

    // Flipping the determining unit flips the decode.
    StructuredPrompt flipped = p;
    flipped.units[2].text = "U3=b";
    CHECK_FALSE(output_preserved(p, flipped, backend, 1));

    CHECK_THROWS_AS(output_preserved(p, p, backend, 0), ConfigError);
}

namespace {

// Distribution-only backend: no decode capability.
class NoDecodeBackend : public rise::ModelBackend {
public:
    explicit NoDecodeBackend(rise::OracleWorld world) : inner_(std::move(world)) {}
    rise::NextTokenDistribution next_token_distribution(std::string_view context) override {
        return inner_.next_token_distribution(context);
    }
    rise::SpanScore span_logprob(std::string_view context, std::string_view target) override {
        return inner_.span_logprob(context, target);
    }
    std::string greedy_decode(std::string_view, int) override {
        throw rise::CapabilityError("decode unsupported");
    }
    rise::BackendCapabilities capabilities() const override {
        rise::BackendCapabilities caps = inner_.capabilities();
        caps.supports_greedy = false;
        return caps;
    }
    std::string identity() const override { return "no-decode"; }

private:
    rise::OracleBackend inner_;
};

} // namespace

TEST_CASE("preservation checks need decode capability") {
    NoDecodeBackend backend(testing::w1_world());
    StructuredPrompt p = testing::w1_prompt();
    CHECK_THROWS_AS(output_preserved(p, p, backend, 1), CapabilityError);
}

TEST_CASE("spearman with average-rank ties") {
    CHECK(spearman_rank_stability({1, 2, 3}, {10, 20, 30}) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman_rank_stability({1, 2, 3}, {3, 2, 1}) ==
          doctest::Approx(-1.0).epsilon(1e-12));
    // Ranks (1,2,3) vs (2,1,3): 1 - 6*2/(3*8) = 0.5.
    CHECK(spearman_rank_stability({1, 2, 3}, {2, 1, 3}) ==
          doctest::Approx(0.5).epsilon(1e-12));
    // Tied pair averaged: ranks (1.5, 1.5, 3) vs (1, 2, 3).
    CHECK(spearman_rank_stability({1, 1, 2}, {1, 2, 3}) ==
          doctest::Approx(1.5 / std::sqrt(3.0)).epsilon(1e-12));
    // Degenerate rank variance conventions.
    CHECK(spearman_rank_stability({1, 1, 1}, {1, 1, 1}) == 1.0);
    CHECK(spearman_rank_stability({1, 1, 1}, {1, 2, 3}) == 0.0);

    CHECK_THROWS_AS(spearman_rank_stability({1}, {1}), InvariantError);
    CHECK_THROWS_AS(spearman_rank_stability({1, 2}, {1, 2, 3}), InvariantError);
}

TEST_CASE("spearman and topk are permutation-equivariant") {
    std::vector<double> a = {0.5, 0.1, 0.9, 0.3, 0.7};
    std::vector<double> b = {0.2, 0.8, 0.4, 0.6, 0.1};
    double rho = spearman_rank_stability(a, b);
    double top = topk_overlap(a, b, 2);

    std::mt19937_64 rng(3);
    std::vector<std::size_t> perm = {0, 1, 2, 3, 4};
    for (int trial = 0; trial < 10; ++trial) {
        for (std::size_t i = perm.size(); i > 1; --i) {
            std::swap(perm[i - 1], perm[rng() % i]);
        }
        std::vector<double> pa(a.size()), pb(b.size());
        for (std::size_t i = 0; i < perm.size(); ++i) {
            pa[i] = a[perm[i]];
            pb[i] = b[perm[i]];
        }
        CHECK(spearman_rank_stability(pa, pb) == doctest::Approx(rho).epsilon(1e-12));
        CHECK(topk_overlap(pa, pb, 2) == doctest::Approx(top).epsilon(1e-12));
    }
}

TEST_CASE("topk overlap with deterministic tie-breaks") {
    std::vector<double> a = {5, 4, 3, 2, 1}; // top-3: {0,1,2}
    std::vector<double> b = {1, 5, 4, 3, 2}; // top-3: {1,2,3}
    CHECK(topk_overlap(a, a, 3) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(topk_overlap(a, b, 3) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    std::vector<double> c = {1, 2, 0, 0, 0}; // top-2: {0,1}
    std::vector<double> d = {0, 0, 0, 1, 2}; // top-2: {3,4}
    CHECK(topk_overlap(c, d, 2) == 0.0);

    CHECK_THROWS_AS(topk_overlap(a, b, 0), InvariantError);
    CHECK_THROWS_AS(topk_overlap(a, b, 6), InvariantError);
}

TEST_CASE("group mass splitting") {
    std::map<std::string, double> even = {{"a", 0.5}, {"b", 0.5}};
    SplitResult r = group_split(even, {{"a", "b"}}, 1e-6);
    CHECK(r.value == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.groups_evaluated == 1);
    CHECK(r.suppressed_groups == 0);

    std::map<std::string, double> concentrated = {{"a", 1.0}, {"b", 0.0}};
    CHECK(group_split(concentrated, {{"a", "b"}}, 1e-6).value == 0.0);

    std::map<std::string, double> zero = {{"a", 0.0}, {"b", 0.0}};
    SplitResult s = group_split(zero, {{"a", "b"}}, 1e-6);
    CHECK(s.value == 0.0);
    CHECK(s.suppressed_groups == 1);

    // Overlapped pair holding (0.98x, 0.02x) of its mass splits at 0.02.
    std::map<std::string, double> skew = {{"a", 0.49}, {"b", 0.01}, {"c", 0.5}};
    CHECK(group_split(skew, {{"a", "b"}}, 1e-6).value ==
          doctest::Approx(0.02).epsilon(1e-9));

    std::map<std::string, double> three = {{"a", 1.0 / 3}, {"b", 1.0 / 3}, {"c", 1.0 / 3}};
    CHECK(group_split(three, {{"a", "b", "c"}}, 1e-6).value ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-9));

    // Invariant under common rescaling of the mass vector.
    std::map<std::string, double> scaled = {{"a", 0.98}, {"b", 0.02}, {"c", 1.0}};
    CHECK(group_split(scaled, {{"a", "b"}}, 1e-6).value ==
          doctest::Approx(0.02).epsilon(1e-9));

    CHECK_THROWS_AS(group_split(even, {{"a", "missing"}}, 1e-6), InvariantError);
    CHECK_THROWS_AS(group_split(even, {}, 1e-6), InvariantError);
}

TEST_CASE("stability and redundancy aggregation") {
    std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs = {
        {{1, 2, 3}, {1, 2, 3}}, // rho 1, top-2 {2,1} vs {2,1}: overlap 1
        {{1, 2, 3}, {3, 2, 1}}, // rho -1, top-2 {2,1} vs {0,1}: overlap 1/2
    };
    StabilityReport s = aggregate_stability(pairs, 2, 3);
    CHECK(s.spearman_rho == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.topk_overlap == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(s.k == 2);
    CHECK(s.n_pairs == 2);
    CHECK(s.n_discarded == 3);

    StabilityReport empty = aggregate_stability({}, 2, 1);
    CHECK(empty.n_pairs == 0);
    CHECK(empty.n_discarded == 1);

    RedundancyReport r = aggregate_redundancy(
        {SplitResult{0.5, 1, 0}, SplitResult{0.0, 1, 1}}, {SplitResult{0.25, 2, 0}});
    CHECK(r.dup_split == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r.split_index == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r.groups_evaluated == 4);
    CHECK(r.suppressed_groups == 1);
}

TEST_CASE("prompt group extraction") {
    StructuredPrompt p = testing::w1_prompt();
    VariantSpec dup;
    dup.kind = VariantKind::duplicate;
    dup.target_unit = "U3";
    dup.copy_count = 2;
    StructuredPrompt v = apply_variant(p, dup).prompt;
    auto groups = duplicate_groups_of(v);
    REQUIRE(groups.size() == 1);
    CHECK(groups[0].size() == 3);
    CHECK(overlap_groups_of(v).empty());
}

TEST_CASE("faithfulness gap on w1") {
    OracleBackend backend(testing::w1_world());
    StructuredPrompt p = testing::w1_prompt();
    FaithfulnessOptions opts;
    opts.m_removed = 1;

    std::map<std::string, double> rise_like = {{"U1", 0.0}, {"U2", 0.0}, {"U3", 1.0}};
    FaithfulnessReport r = faithfulness_gap(p, rise_like, "1", backend, opts);
    CHECK(r.gap == doctest::Approx(kLn2).epsilon(1e-9));
    CHECK(r.drop_top == doctest::Approx(kLn2).epsilon(1e-9));
    CHECK(r.drop_bottom == doctest::Approx(0.0).epsilon(1e-12));

    std::map<std::string, double> reversed = {{"U1", 1.0}, {"U2", 1.0}, {"U3", 0.0}};
    CHECK(faithfulness_gap(p, reversed, "1", backend, opts).gap ==
          doctest::Approx(-kLn2).epsilon(1e-9));

    // Uniform attribution on a symmetric prompt: both removals tie-break to
    // the same unit and the gap vanishes.
    std::map<std::string, double> flat = {{"U1", 1.0 / 3}, {"U2", 1.0 / 3}, {"U3", 1.0 / 3}};
    CHECK(faithfulness_gap(p, flat, "1", backend, opts).gap ==
          doctest::Approx(0.0).epsilon(1e-12));

    opts.m_removed = 2;
    CHECK_THROWS_AS(faithfulness_gap(p, flat, "1", backend, opts), ConfigError);
}

TEST_CASE("faithfulness question-role exclusion") {
    OracleBackend backend(testing::w1_world());
    StructuredPrompt p = testing::w1_prompt();
    p.units[2].role = Role::question; // make the informative unit structural
    std::map<std::string, double> scores = {{"U1", 0.0}, {"U2", 0.0}, {"U3", 1.0}};

    FaithfulnessOptions opts;
    opts.m_removed = 1;
    // Excluded by default: only the redundant pair is removable, gap 0.
    CHECK(faithfulness_gap(p, scores, "1", backend, opts).gap ==
          doctest::Approx(0.0).epsilon(1e-12));
    // The flag disables the filter and the informative unit drives the gap.
    opts.exclude_question_role = false;
    CHECK(faithfulness_gap(p, scores, "1", backend, opts).gap ==
          doctest::Approx(kLn2).epsilon(1e-9));
}
