#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rise/context.hpp"

namespace rise {

enum class VariantKind { duplicate, paraphrase, reorder, overlap_inject };
enum class ParaphraseStrength { light, medium, hard };

std::string_view to_string(VariantKind kind);
std::string_view to_string(ParaphraseStrength strength);
ParaphraseStrength paraphrase_strength_from_string(std::string_view name);

// Checked-in substitution table keyed by fnv1a64 hex of the unit text:
// { "<hash>": {"light": "...", "medium": "...", "hard": "..."} }.
// Deterministic and reviewable; missing entries are an explicit error at
// application time, never a silent fallback.
class ParaphraseTable {
public:
    ParaphraseTable() = default;
    static ParaphraseTable from_json(const nlohmann::json& j);
    static ParaphraseTable load_file(const std::string& path);
    nlohmann::json to_json() const;

    void add(const std::string& source_text, ParaphraseStrength strength,
             std::string replacement);
    std::optional<std::string> lookup(const std::string& source_text,
                                      ParaphraseStrength strength) const;
    bool empty() const { return entries_.empty(); }

private:
    // hash hex -> strength -> replacement
    std::map<std::string, std::map<std::string, std::string>> entries_;
};

struct VariantSpec {
    VariantKind kind = VariantKind::duplicate;
    std::optional<std::string> target_unit;

    // duplicate
    int copy_count = 1;
    bool insert_adjacent = false; // default appends at the end of the prompt

    // paraphrase
    ParaphraseStrength strength = ParaphraseStrength::light;

    // reorder: permutation[new_position] = old_position
    std::vector<int> permutation;

    // overlap_inject: byte-prefix fraction in (0, 1]
    double overlap_fraction = 1.0;

    std::string label() const;
    nlohmann::json to_json() const;
};

struct PromptVariant {
    std::string base_id;
    VariantSpec spec;
    StructuredPrompt prompt;
    // variant unit id -> base unit id; every base unit appears as a value.
    std::map<std::string, std::string> provenance;
};

PromptVariant apply_variant(const StructuredPrompt& prompt, const VariantSpec& spec,
                            const ParaphraseTable* table = nullptr);

// Stress-suite parameters: a redundancy sweep, a paraphrase sweep, seeded
// reorders, and optional overlap injections.
struct StressSuiteConfig {
    std::vector<int> duplication_counts;
    std::optional<std::string> duplicate_target; // default: first instruction unit
    std::vector<ParaphraseStrength> paraphrase_strengths;
    std::optional<std::string> paraphrase_target; // default: question unit
    int reorder_count = 0;
    std::vector<double> overlap_fractions;
    std::optional<std::string> overlap_target; // default: first retrieval unit
    std::uint64_t seed = 0;

    bool empty() const {
        return duplication_counts.empty() && paraphrase_strengths.empty() &&
               reorder_count == 0 && overlap_fractions.empty();
    }
};

std::vector<PromptVariant> generate_stress_suite(const StructuredPrompt& prompt,
                                                 const StressSuiteConfig& config,
                                                 const ParaphraseTable* table = nullptr);

} // namespace rise
