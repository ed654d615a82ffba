#include "rise/context.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "rise/errors.hpp"

namespace rise {

std::string_view to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::instruction: return "instruction";
        case Role::question: return "question";
        case Role::retrieval: return "retrieval";
        case Role::memory: return "memory";
        case Role::dialogue: return "dialogue";
    }
    return "instruction";
}

Role role_from_string(std::string_view name) {
    if (name == "system") return Role::system;
    if (name == "instruction") return Role::instruction;
    if (name == "question") return Role::question;
    if (name == "retrieval") return Role::retrieval;
    if (name == "memory") return Role::memory;
    if (name == "dialogue") return Role::dialogue;
    throw ConfigError("unknown role: " + std::string(name));
}

const ContextUnit* StructuredPrompt::find(std::string_view unit_id) const {
    for (const auto& u : units) {
        if (u.id == unit_id) return &u;
    }
    return nullptr;
}

void StructuredPrompt::normalize_and_validate() {
    std::stable_sort(units.begin(), units.end(),
                     [](const ContextUnit& a, const ContextUnit& b) {
                         return a.position < b.position;
                     });
    std::unordered_set<std::string> seen_ids;
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (!seen_ids.insert(units[i].id).second) {
            throw InvariantError("duplicate unit id in prompt '" + id + "': " + units[i].id);
        }
        if (units[i].position != static_cast<int>(i)) {
            throw InvariantError("unit positions in prompt '" + id +
                                 "' are not a contiguous permutation of 0..m-1");
        }
    }
    // Duplicate-group members must carry byte-identical text.
    std::unordered_map<std::string, const std::string*> group_text;
    for (const auto& u : units) {
        if (!u.duplicate_group) continue;
        auto [it, inserted] = group_text.emplace(*u.duplicate_group, &u.text);
        if (!inserted && *it->second != u.text) {
            throw InvariantError("duplicate_group '" + *u.duplicate_group +
                                 "' holds units with differing text");
        }
    }
}

std::string serialize(const StructuredPrompt& prompt) {
    std::string out;
    bool first = true;
    for (const auto& u : prompt.units) {
        if (!first) out += prompt.tmpl.separator;
        first = false;
        auto it = prompt.tmpl.role_prefixes.find(u.role);
        if (it != prompt.tmpl.role_prefixes.end()) out += it->second;
        out += u.text;
    }
    return out;
}

StructuredPrompt remove_units(const StructuredPrompt& prompt,
                              const std::set<std::string>& ids) {
    for (const auto& id : ids) {
        if (!prompt.has_unit(id)) {
            throw InvariantError("remove_units: unknown unit id '" + id +
                                 "' in prompt '" + prompt.id + "'");
        }
    }
    StructuredPrompt out;
    out.id = prompt.id;
    out.tmpl = prompt.tmpl;
    for (const auto& u : prompt.units) {
        if (ids.count(u.id)) continue;
        ContextUnit copy = u;
        copy.position = static_cast<int>(out.units.size());
        out.units.push_back(std::move(copy));
    }
    return out;
}

} // namespace rise
