#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rise/context.hpp"

namespace rise {

// Prompt corpus file: a UTF-8 JSON array of prompts, each
// {id, template:{separator, role_prefixes}, units:[{id, role, text,
// duplicate_group?, overlap_group?}]}. The array order of `units` is the
// position order.
std::vector<StructuredPrompt> corpus_from_json(const nlohmann::json& j);
nlohmann::json corpus_to_json(const std::vector<StructuredPrompt>& prompts);
std::vector<StructuredPrompt> load_corpus(const std::string& path);
void save_corpus(const std::vector<StructuredPrompt>& prompts, const std::string& path);

nlohmann::json prompt_to_json(const StructuredPrompt& prompt);
StructuredPrompt prompt_from_json(const nlohmann::json& j);

} // namespace rise
