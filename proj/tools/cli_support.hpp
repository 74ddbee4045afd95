#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace kif::cli {

inline constexpr int schema_version = 1;

//! Bad flags, files or scenario fields; maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
};

inline std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    out += (c ? "," : "") + table.header[c];
  out += '\n';
  const std::size_t rows = table.columns.empty() ? 0 : table.columns.front().size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < table.columns.size(); ++c)
      out += (c ? "," : "") + format_number(table.columns[c][r]);
    out += '\n';
  }
  return out;
}

inline std::string to_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

//! Writes via a sibling temporary file and a rename, so readers never see a partial file.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  if (path == "-") {
    std::fwrite(content.data(), 1, content.size(), stdout);
    std::fflush(stdout);
    return;
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw ConfigError("cannot write " + tmp.string());
    out << content;
    if (!out.flush())
      throw ConfigError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void require_readable(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot read input file " + path);
}

inline void require_writable_target(const std::string& path) {
  if (path == "-")
    return;
  const auto parent = std::filesystem::absolute(path).parent_path();
  if (!std::filesystem::is_directory(parent))
    throw ConfigError("output directory does not exist: " + parent.string());
}

inline void require_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (!std::filesystem::is_directory(path))
    throw ConfigError("cannot create output directory " + path);
}

//! Two numeric columns (t, y) with an optional header row.
struct Series {
  std::vector<double> t, y;
};

inline Series read_series(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot read input file " + path);
  Series s;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(number) + ": expected two comma-separated columns");
    try {
      std::size_t b = 0;
      const double t = std::stod(line.substr(0, comma));
      const std::string rest = line.substr(comma + 1);
      const double y = std::stod(rest, &b);
      if (rest.find_first_not_of(" \t", b) != std::string::npos)
        throw ConfigError(path + ":" + std::to_string(number) + ": expected two columns");
      s.t.push_back(t);
      s.y.push_back(y);
    } catch (const std::invalid_argument&) {
      if (number == 1)
        continue;
      throw ConfigError(path + ":" + std::to_string(number) + ": not a number");
    } catch (const std::out_of_range&) {
      throw ConfigError(path + ":" + std::to_string(number) + ": value out of range");
    }
  }
  if (s.y.size() < 16)
    throw ConfigError(path + ": need at least 16 samples");
  const double dt = (s.t.back() - s.t.front()) / static_cast<double>(s.t.size() - 1);
  if (!(dt > 0.0))
    throw ConfigError(path + ": time column must increase");
  for (std::size_t j = 1; j < s.t.size(); ++j)
    if (std::abs(s.t[j] - s.t[j - 1] - dt) > 1e-6 * dt)
      throw ConfigError(path + ":" + std::to_string(j + 1) + ": time column is not uniformly spaced");
  return s;
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot read config file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void require_schema_version(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object())
    throw ConfigError(where + ": $ must be an object");
  if (!j.contains("schema_version"))
    throw ConfigError(where + ": $.schema_version is required");
  if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != schema_version)
    throw ConfigError(where + ": $.schema_version must be " + std::to_string(schema_version));
}

//! Flags for a subcommand from a JSON object: {"halfwidth": 0.05} becomes
//! "--halfwidth 0.05". Keys already given on the command line are skipped so
//! flags take precedence.
inline std::vector<std::string> config_arguments(const nlohmann::json& j, const std::string& where,
                                                 const std::vector<std::string>& given,
                                                 const std::function<bool(const std::string&)>& is_known_flag) {
  require_schema_version(j, where);
  std::vector<std::string> out;
  for (const auto& [key, value] : j.items()) {
    if (key == "schema_version")
      continue;
    const std::string flag = "--" + key;
    if (!is_known_flag(flag))
      throw ConfigError(where + ": $." + key + ": unknown field");
    bool overridden = false;
    for (const auto& g : given)
      overridden = overridden || g == flag || g.rfind(flag + "=", 0) == 0;
    if (overridden)
      continue;
    auto scalar = [&](const nlohmann::json& v, const std::string& path) -> std::string {
      if (v.is_string())
        return v.get<std::string>();
      if (v.is_number_integer())
        return std::to_string(v.get<long long>());
      if (v.is_number())
        return format_number(v.get<double>());
      throw ConfigError(where + ": " + path + ": expected a number or string");
    };
    if (value.is_boolean()) {
      if (value.get<bool>())
        out.push_back(flag);
    } else if (value.is_array()) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        out.push_back(flag);
        out.push_back(scalar(value[i], "$." + key + "[" + std::to_string(i) + "]"));
      }
    } else {
      out.push_back(flag);
      out.push_back(scalar(value, "$." + key));
    }
  }
  return out;
}

} // namespace kif::cli
