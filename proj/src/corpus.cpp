#include "rise/corpus.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "rise/errors.hpp"

namespace rise {

StructuredPrompt prompt_from_json(const nlohmann::json& j) {
    StructuredPrompt p;
    p.id = j.at("id").get<std::string>();
    if (j.contains("template")) {
        const auto& tj = j.at("template");
        p.tmpl.separator = tj.value("separator", "\n");
        if (tj.contains("role_prefixes")) {
            for (const auto& [role, prefix] : tj.at("role_prefixes").items()) {
                p.tmpl.role_prefixes[role_from_string(role)] = prefix.get<std::string>();
            }
        }
    }
    int position = 0;
    for (const auto& uj : j.at("units")) {
        ContextUnit u;
        u.id = uj.at("id").get<std::string>();
        u.role = role_from_string(uj.at("role").get<std::string>());
        u.text = uj.at("text").get<std::string>();
        u.position = position++;
        if (uj.contains("duplicate_group")) {
            u.duplicate_group = uj.at("duplicate_group").get<std::string>();
        }
        if (uj.contains("overlap_group")) {
            u.overlap_group = uj.at("overlap_group").get<std::string>();
        }
        p.units.push_back(std::move(u));
    }
    p.normalize_and_validate();
    return p;
}

nlohmann::json prompt_to_json(const StructuredPrompt& prompt) {
    nlohmann::json j;
    j["id"] = prompt.id;
    nlohmann::json tj;
    tj["separator"] = prompt.tmpl.separator;
    if (!prompt.tmpl.role_prefixes.empty()) {
        nlohmann::json rp = nlohmann::json::object();
        for (const auto& [role, prefix] : prompt.tmpl.role_prefixes) {
            rp[std::string(to_string(role))] = prefix;
        }
        tj["role_prefixes"] = std::move(rp);
    }
    j["template"] = std::move(tj);
    j["units"] = nlohmann::json::array();
    for (const auto& u : prompt.units) {
        nlohmann::json uj;
        uj["id"] = u.id;
        uj["role"] = std::string(to_string(u.role));
        uj["text"] = u.text;
        if (u.duplicate_group) uj["duplicate_group"] = *u.duplicate_group;
        if (u.overlap_group) uj["overlap_group"] = *u.overlap_group;
        j["units"].push_back(std::move(uj));
    }
    return j;
}

std::vector<StructuredPrompt> corpus_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ConfigError("prompt corpus must be a JSON array");
    std::vector<StructuredPrompt> out;
    for (const auto& pj : j) out.push_back(prompt_from_json(pj));
    return out;
}

nlohmann::json corpus_to_json(const std::vector<StructuredPrompt>& prompts) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : prompts) j.push_back(prompt_to_json(p));
    return j;
}

std::vector<StructuredPrompt> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open corpus file: " + path);
    nlohmann::json j;
    try {
        in >> j;
        return corpus_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed corpus JSON in " + path + ": " + e.what());
    } catch (const InvariantError& e) {
        // Violations inside a corpus file are bad input, not a broken run.
        throw ConfigError("invalid corpus in " + path + ": " + e.what());
    }
}

void save_corpus(const std::vector<StructuredPrompt>& prompts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write corpus file: " + path);
    out << corpus_to_json(prompts).dump(2) << "\n";
}

} // namespace rise
