#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace fkw::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

// Everything needed to replay a run. Parameters are kept as strings exactly
// as they were given so that the manifest round-trips byte for byte.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> params;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  Json to_json() const {
    Json j;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["version"] = version;
    Json p = Json::object();
    for (const auto& [k, v] : params) p[k] = v;
    j["params"] = p;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    return j;
  }

  // key = value lines; readable back with parse_config.
  std::string to_config() const {
    std::ostringstream os;
    os << "subcommand = " << subcommand << "\nseed = " << seed << "\n";
    for (const auto& [k, v] : params) os << k << " = " << v << "\n";
    return os.str();
  }
};

inline std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

// Parses `key = value` lines. Blank lines and lines starting with # are ignored.
inline std::map<std::string, std::string> parse_config(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const std::string line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    out[key] = trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Writes to a sibling temporary file and renames it over the target, so a
// reader never sees a partially written file.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void append_lines_atomic(const std::filesystem::path& path, std::string_view lines) {
  std::string content = std::filesystem::exists(path) ? read_file(path) : std::string{};
  if (!content.empty() && content.back() != '\n') content.push_back('\n');
  content.append(lines);
  write_atomic(path, content);
}

// One JSON-lines record for a skeleton or trajectory sample:
// {"columns":[...],"heights":[[...],...]} with heights[k] the r heights at columns[k].
template <typename Col, typename H>
Json trajectory_record(const std::vector<Col>& columns, const std::vector<std::vector<H>>& heights) {
  Json j;
  j["columns"] = columns;
  j["heights"] = heights;
  return j;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  template <typename... T>
  void row(const T&... values) {
    std::vector<std::string> cells;
    (cells.push_back(cell(values)), ...);
    add(std::move(cells));
  }

  void add(std::vector<std::string> cells) {
    if (cells.size() != header_.size()) throw std::invalid_argument("csv row width does not match header");
    rows_.push_back(std::move(cells));
  }

  std::string render(const RunManifest& manifest) const {
    std::ostringstream os;
    os << "# manifest: " << manifest.to_json().dump() << "\n";
    join(os, header_);
    for (const auto& r : rows_) join(os, r);
    return os.str();
  }

  std::size_t size() const noexcept { return rows_.size(); }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <typename T>
  static std::string cell(const T& v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  }

  static void join(std::ostringstream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << "\n";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace fkw::io
