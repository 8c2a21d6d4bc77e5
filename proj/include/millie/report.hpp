#pragma once

#include <string>

#include "json.hpp"

namespace millie {

// Insertion-ordered JSON so reports keep a stable key order and identical
// runs produce byte-identical files.
using Json = nlohmann::ordered_json;

void write_report(const Json& report, const std::string& path);
Json load_report(const std::string& path);

}  // namespace millie
