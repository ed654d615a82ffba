#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace rise {

enum class Role { system, instruction, question, retrieval, memory, dialogue };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

// One semantically coherent prompt component: a system line, an instruction,
// the question, a retrieved chunk, a memory entry, a dialogue turn.
// Attribution operates at this granularity.
struct ContextUnit {
    std::string id;
    Role role = Role::instruction;
    std::string text;
    int position = 0; // ordinal within the prompt, 0..m-1 contiguous
    std::optional<std::string> duplicate_group;
    std::optional<std::string> overlap_group;
};

// Serialization descriptor. Units are concatenated in position order,
// each optionally prefixed by its role's prefix, joined by `separator`.
struct PromptTemplate {
    std::string separator = "\n";
    std::map<Role, std::string> role_prefixes;
};

// An ordered set of context units plus its serialization template.
// Units are kept sorted by position; equal prompts serialize identically.
struct StructuredPrompt {
    std::string id;
    PromptTemplate tmpl;
    std::vector<ContextUnit> units;

    std::size_t size() const { return units.size(); }
    const ContextUnit* find(std::string_view unit_id) const;
    bool has_unit(std::string_view unit_id) const { return find(unit_id) != nullptr; }

    // Checks id uniqueness, that positions form a contiguous permutation of
    // 0..m-1, and that duplicate-group members have byte-identical text.
    // Throws InvariantError on violation. Sorts units by position.
    void normalize_and_validate();
};

std::string serialize(const StructuredPrompt& prompt);

// Returns the prompt with the listed units removed and positions re-indexed
// contiguously. Removing every unit is legal: the result is the empty
// context, which backends treat as "no conditioning units".
StructuredPrompt remove_units(const StructuredPrompt& prompt,
                              const std::set<std::string>& ids);

} // namespace rise
