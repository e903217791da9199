#include "ust/core/json_io.hpp"

#include <cstdio>
#include <fstream>

namespace ust {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw data_error("json parse error in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& where) {
  if (!obj.is_object()) throw data_error(where + ": expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const auto& k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw data_error(where + ": unknown key \"" + it.key() + "\"");
  }
}

std::string json_hash(const json& j) {
  // nlohmann::json::dump emits object keys in sorted order, so the dump is
  // a canonical form as long as floats round-trip (they do: shortest repr).
  uint64_t h = fnv1a64(j.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ust
