#include "millie/report.hpp"

#include <fstream>
#include <sstream>

#include "millie/errors.hpp"

namespace millie {

void write_report(const Json& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << report.dump(2) << '\n';
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

Json load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace millie
