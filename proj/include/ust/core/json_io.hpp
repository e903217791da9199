#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ust/core/error.hpp"
#include "ust/core/rng.hpp"

namespace ust {

using json = nlohmann::json;

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

// Rejects keys not present in `allowed`; `where` names the object in errors.
void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& where);

// Stable 64-bit hash of a JSON value (sorted keys via nlohmann's ordered dump).
std::string json_hash(const json& j);

}  // namespace ust
