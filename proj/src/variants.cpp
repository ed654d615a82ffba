#include "rise/variants.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "rise/errors.hpp"
#include "rise/util.hpp"

namespace rise {

std::string_view to_string(VariantKind kind) {
    switch (kind) {
        case VariantKind::duplicate: return "duplicate";
        case VariantKind::paraphrase: return "paraphrase";
        case VariantKind::reorder: return "reorder";
        case VariantKind::overlap_inject: return "overlap_inject";
    }
    return "duplicate";
}

std::string_view to_string(ParaphraseStrength strength) {
    switch (strength) {
        case ParaphraseStrength::light: return "light";
        case ParaphraseStrength::medium: return "medium";
        case ParaphraseStrength::hard: return "hard";
    }
    return "light";
}

ParaphraseStrength paraphrase_strength_from_string(std::string_view name) {
    if (name == "light") return ParaphraseStrength::light;
    if (name == "medium") return ParaphraseStrength::medium;
    if (name == "hard") return ParaphraseStrength::hard;
    throw ConfigError("unknown paraphrase strength: " + std::string(name));
}

ParaphraseTable ParaphraseTable::from_json(const nlohmann::json& j) {
    ParaphraseTable t;
    for (const auto& [hash, strengths] : j.items()) {
        for (const auto& [strength, replacement] : strengths.items()) {
            paraphrase_strength_from_string(strength); // validate key
            t.entries_[hash][strength] = replacement.get<std::string>();
        }
    }
    return t;
}

ParaphraseTable ParaphraseTable::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open paraphrase table: " + path);
    nlohmann::json j;
    try {
        in >> j;
        return from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed paraphrase table JSON in " + path + ": " + e.what());
    }
}

nlohmann::json ParaphraseTable::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [hash, strengths] : entries_) {
        for (const auto& [strength, replacement] : strengths) {
            j[hash][strength] = replacement;
        }
    }
    return j;
}

void ParaphraseTable::add(const std::string& source_text, ParaphraseStrength strength,
                          std::string replacement) {
    entries_[fnv1a64_hex(source_text)][std::string(to_string(strength))] =
        std::move(replacement);
}

std::optional<std::string> ParaphraseTable::lookup(const std::string& source_text,
                                                   ParaphraseStrength strength) const {
    auto it = entries_.find(fnv1a64_hex(source_text));
    if (it == entries_.end()) return std::nullopt;
    auto jt = it->second.find(std::string(to_string(strength)));
    if (jt == it->second.end()) return std::nullopt;
    return jt->second;
}

std::string VariantSpec::label() const {
    std::string l(to_string(kind));
    if (target_unit) l += ":" + *target_unit;
    switch (kind) {
        case VariantKind::duplicate:
            l += ":x" + std::to_string(copy_count);
            break;
        case VariantKind::paraphrase:
            l += ":" + std::string(to_string(strength));
            break;
        case VariantKind::reorder: {
            l += ":(";
            for (std::size_t i = 0; i < permutation.size(); ++i) {
                if (i) l += ",";
                l += std::to_string(permutation[i]);
            }
            l += ")";
            break;
        }
        case VariantKind::overlap_inject:
            l += ":f" + std::to_string(overlap_fraction);
            break;
    }
    return l;
}

nlohmann::json VariantSpec::to_json() const {
    nlohmann::json j;
    j["kind"] = std::string(to_string(kind));
    if (target_unit) j["target_unit"] = *target_unit;
    switch (kind) {
        case VariantKind::duplicate:
            j["copy_count"] = copy_count;
            j["insert_adjacent"] = insert_adjacent;
            break;
        case VariantKind::paraphrase:
            j["strength"] = std::string(to_string(strength));
            break;
        case VariantKind::reorder:
            j["permutation"] = permutation;
            break;
        case VariantKind::overlap_inject:
            j["overlap_fraction"] = overlap_fraction;
            break;
    }
    return j;
}

namespace {

const ContextUnit& require_target(const StructuredPrompt& prompt, const VariantSpec& spec) {
    if (!spec.target_unit) {
        throw ConfigError("variant '" + std::string(to_string(spec.kind)) +
                          "' requires a target unit");
    }
    const ContextUnit* u = prompt.find(*spec.target_unit);
    if (!u) {
        throw ConfigError("variant target unit '" + *spec.target_unit +
                          "' not found in prompt '" + prompt.id + "'");
    }
    return *u;
}

void reindex(StructuredPrompt& p) {
    for (std::size_t i = 0; i < p.units.size(); ++i) {
        p.units[i].position = static_cast<int>(i);
    }
}

} // namespace

PromptVariant apply_variant(const StructuredPrompt& prompt, const VariantSpec& spec,
                            const ParaphraseTable* table) {
    PromptVariant v;
    v.base_id = prompt.id;
    v.spec = spec;
    v.prompt = prompt;
    v.prompt.id = prompt.id + "#" + spec.label();
    for (const auto& u : prompt.units) v.provenance[u.id] = u.id;

    switch (spec.kind) {
        case VariantKind::duplicate: {
            const ContextUnit& src = require_target(prompt, spec);
            if (spec.copy_count < 1) throw ConfigError("duplicate copy_count must be >= 1");
            std::string group = src.duplicate_group.value_or("dupg_" + src.id);
            // Tag the source so group membership is visible on both sides.
            for (auto& u : v.prompt.units) {
                if (u.id == src.id) u.duplicate_group = group;
            }
            std::size_t insert_at = v.prompt.units.size();
            if (spec.insert_adjacent) {
                insert_at = static_cast<std::size_t>(src.position) + 1;
            }
            for (int k = 0; k < spec.copy_count; ++k) {
                ContextUnit copy = src;
                copy.id = src.id + "__dup" + std::to_string(k + 1);
                copy.duplicate_group = group;
                v.prompt.units.insert(
                    v.prompt.units.begin() + static_cast<std::ptrdiff_t>(insert_at + static_cast<std::size_t>(k)),
                    copy);
                v.provenance[copy.id] = src.id;
            }
            break;
        }
        case VariantKind::paraphrase: {
            const ContextUnit& src = require_target(prompt, spec);
            if (!table) {
                throw ConfigError("paraphrase variant requires a paraphrase table");
            }
            auto replacement = table->lookup(src.text, spec.strength);
            if (!replacement) {
                throw ConfigError("paraphrase table has no '" +
                                  std::string(to_string(spec.strength)) + "' entry for text hash " +
                                  fnv1a64_hex(src.text) + " (unit '" + src.id + "')");
            }
            for (auto& u : v.prompt.units) {
                if (u.id == src.id) {
                    u.text = *replacement;
                    // A rewritten text may no longer match its duplicate group.
                    u.duplicate_group.reset();
                }
            }
            break;
        }
        case VariantKind::reorder: {
            const auto& perm = spec.permutation;
            if (perm.size() != prompt.units.size()) {
                throw ConfigError("reorder permutation length mismatch");
            }
            std::vector<bool> seen(perm.size(), false);
            for (int p : perm) {
                if (p < 0 || static_cast<std::size_t>(p) >= perm.size() ||
                    seen[static_cast<std::size_t>(p)]) {
                    throw ConfigError("reorder permutation is not a valid permutation");
                }
                seen[static_cast<std::size_t>(p)] = true;
            }
            std::vector<ContextUnit> reordered;
            reordered.reserve(prompt.units.size());
            for (int old_pos : perm) {
                reordered.push_back(prompt.units[static_cast<std::size_t>(old_pos)]);
            }
            v.prompt.units = std::move(reordered);
            break;
        }
        case VariantKind::overlap_inject: {
            const ContextUnit& src = require_target(prompt, spec);
            if (!(spec.overlap_fraction > 0.0 && spec.overlap_fraction <= 1.0)) {
                throw ConfigError("overlap fraction must lie in (0, 1]");
            }
            std::string group = src.overlap_group.value_or("ovg_" + src.id);
            for (auto& u : v.prompt.units) {
                if (u.id == src.id) u.overlap_group = group;
            }
            auto keep = static_cast<std::size_t>(
                std::floor(spec.overlap_fraction * static_cast<double>(src.text.size())));
            ContextUnit injected;
            injected.id = src.id + "__ov";
            injected.role = Role::retrieval;
            injected.text = src.text.substr(0, keep);
            injected.overlap_group = group;
            v.prompt.units.push_back(injected);
            v.provenance[injected.id] = src.id;
            break;
        }
    }
    reindex(v.prompt);
    v.prompt.normalize_and_validate();
    return v;
}

namespace {

std::string default_target(const StructuredPrompt& prompt, Role preferred, bool last_fallback) {
    for (const auto& u : prompt.units) {
        if (u.role == preferred) return u.id;
    }
    return last_fallback ? prompt.units.back().id : prompt.units.front().id;
}

} // namespace

std::vector<PromptVariant> generate_stress_suite(const StructuredPrompt& prompt,
                                                 const StressSuiteConfig& config,
                                                 const ParaphraseTable* table) {
    if (config.empty()) throw ConfigError("stress suite config is empty");
    std::vector<PromptVariant> out;

    for (int count : config.duplication_counts) {
        VariantSpec spec;
        spec.kind = VariantKind::duplicate;
        spec.target_unit =
            config.duplicate_target.value_or(default_target(prompt, Role::instruction, false));
        spec.copy_count = count;
        out.push_back(apply_variant(prompt, spec));
    }
    for (ParaphraseStrength strength : config.paraphrase_strengths) {
        VariantSpec spec;
        spec.kind = VariantKind::paraphrase;
        spec.target_unit =
            config.paraphrase_target.value_or(default_target(prompt, Role::question, false));
        spec.strength = strength;
        out.push_back(apply_variant(prompt, spec, table));
    }
    if (config.reorder_count > 0) {
        // Seed mixed with the prompt id: re-runs are byte-identical, distinct
        // prompts draw distinct permutations.
        std::mt19937_64 rng(config.seed ^ fnv1a64(prompt.id));
        for (int r = 0; r < config.reorder_count; ++r) {
            std::vector<int> perm(prompt.units.size());
            for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
            deterministic_shuffle(perm, rng);
            VariantSpec spec;
            spec.kind = VariantKind::reorder;
            spec.permutation = std::move(perm);
            out.push_back(apply_variant(prompt, spec));
        }
    }
    for (double fraction : config.overlap_fractions) {
        VariantSpec spec;
        spec.kind = VariantKind::overlap_inject;
        spec.target_unit =
            config.overlap_target.value_or(default_target(prompt, Role::retrieval, true));
        spec.overlap_fraction = fraction;
        out.push_back(apply_variant(prompt, spec));
    }
    return out;
}

} // namespace rise
