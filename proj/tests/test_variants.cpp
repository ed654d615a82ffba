#include <doctest.h>

#include <set>

#include "rise/errors.hpp"
#include "rise/variants.hpp"
#include "support/test_worlds.hpp"

using namespace rise;

namespace {

StructuredPrompt five_units() {
    StructuredPrompt p;
    p.id = "p5";
    for (int i = 0; i < 5; ++i) {
        ContextUnit u;
        u.id = "u" + std::to_string(i);
        u.role = i == 0 ? Role::system : Role::instruction;
        u.text = "text-" + std::to_string(i);
        u.position = i;
        p.units.push_back(u);
    }
    p.normalize_and_validate();
    return p;
}

} // namespace

TEST_CASE("duplicate variant appends byte-identical copies in a shared group") {
    StructuredPrompt p = five_units();
    VariantSpec spec;
    spec.kind = VariantKind::duplicate;
    spec.target_unit = "u0";
    spec.copy_count = 1;

    PromptVariant v = apply_variant(p, spec);
    REQUIRE(v.prompt.units.size() == 6);
    const ContextUnit* copy = v.prompt.find("u0__dup1");
    REQUIRE(copy != nullptr);
    CHECK(copy->text == "text-0");
    CHECK(copy->position == 5); // appended at the end by default
    REQUIRE(copy->duplicate_group.has_value());
    CHECK(v.prompt.find("u0")->duplicate_group == copy->duplicate_group);
    CHECK(v.provenance.at("u0__dup1") == "u0");
    // every base unit id appears in provenance
    for (const auto& u : p.units) CHECK(v.provenance.count(u.id) == 1);

    SUBCASE("adjacent placement") {
        spec.insert_adjacent = true;
        PromptVariant adj = apply_variant(p, spec);
        CHECK(adj.prompt.find("u0__dup1")->position == 1);
    }

    SUBCASE("duplicate then remove round-trips to the base serialization") {
        StructuredPrompt stripped = remove_units(v.prompt, {"u0__dup1"});
        // The surviving group tag does not affect serialization.
        CHECK(serialize(stripped) == serialize(p));
    }
}

TEST_CASE("reorder permutes by new-position indices") {
    StructuredPrompt p;
    p.id = "p3";
    p.units = {ContextUnit{.id = "a", .text = "a", .position = 0},
               ContextUnit{.id = "b", .text = "b", .position = 1},
               ContextUnit{.id = "c", .text = "c", .position = 2}};
    p.normalize_and_validate();

    VariantSpec spec;
    spec.kind = VariantKind::reorder;
    spec.permutation = {2, 0, 1};
    PromptVariant v = apply_variant(p, spec);
    CHECK(serialize(v.prompt) == "c\na\nb");

    spec.permutation = {0, 0, 1};
    CHECK_THROWS_AS(apply_variant(p, spec), ConfigError);
}

TEST_CASE("overlap injection keeps the byte prefix at the given fraction") {
    StructuredPrompt p;
    p.id = "p";
    p.units = {ContextUnit{.id = "ctx", .role = Role::retrieval, .text = "0123456789",
                           .position = 0}};
    p.normalize_and_validate();

    VariantSpec spec;
    spec.kind = VariantKind::overlap_inject;
    spec.target_unit = "ctx";
    spec.overlap_fraction = 0.7;
    PromptVariant v = apply_variant(p, spec);
    const ContextUnit* injected = v.prompt.find("ctx__ov");
    REQUIRE(injected != nullptr);
    CHECK(injected->text == "0123456");
    CHECK(injected->role == Role::retrieval);
    REQUIRE(injected->overlap_group.has_value());
    CHECK(v.prompt.find("ctx")->overlap_group == injected->overlap_group);

    spec.overlap_fraction = 0.0;
    CHECK_THROWS_AS(apply_variant(p, spec), ConfigError);
}

TEST_CASE("paraphrase substitutes from the table and never falls back silently") {
    StructuredPrompt p = testing::w1_prompt();
    ParaphraseTable table;
    table.add("U3=a", ParaphraseStrength::light, "U3=a (see retrieval)");

    VariantSpec spec;
    spec.kind = VariantKind::paraphrase;
    spec.target_unit = "U3";
    spec.strength = ParaphraseStrength::light;
    PromptVariant v = apply_variant(p, spec, &table);
    CHECK(v.prompt.find("U3")->text == "U3=a (see retrieval)");

    spec.strength = ParaphraseStrength::hard; // not in the table
    CHECK_THROWS_AS(apply_variant(p, spec, &table), ConfigError);
    CHECK_THROWS_AS(apply_variant(p, spec, nullptr), ConfigError);
}

TEST_CASE("stress suite enumerates sweeps deterministically") {
    StructuredPrompt p = five_units();
    ParaphraseTable table;
    table.add("text-1", ParaphraseStrength::light, "text-1 (light)");
    table.add("text-1", ParaphraseStrength::hard, "totally different");

    StressSuiteConfig config;
    config.duplication_counts = {1, 2, 3};
    config.duplicate_target = "u1";
    config.paraphrase_strengths = {ParaphraseStrength::light, ParaphraseStrength::hard};
    config.paraphrase_target = "u1";
    config.reorder_count = 2;
    config.seed = 7;

    auto suite = generate_stress_suite(p, config, &table);
    REQUIRE(suite.size() == 7);
    CHECK(suite[0].prompt.units.size() == 6);
    CHECK(suite[1].prompt.units.size() == 7);
    CHECK(suite[2].prompt.units.size() == 8);
    CHECK(suite[3].prompt.find("u1")->text == "text-1 (light)");
    CHECK(suite[4].prompt.find("u1")->text == "totally different");

    auto again = generate_stress_suite(p, config, &table);
    REQUIRE(again.size() == suite.size());
    for (std::size_t i = 0; i < suite.size(); ++i) {
        CHECK(serialize(again[i].prompt) == serialize(suite[i].prompt));
        CHECK(again[i].spec.label() == suite[i].spec.label());
    }

    StressSuiteConfig empty;
    CHECK_THROWS_AS(generate_stress_suite(p, empty, &table), ConfigError);
}
