#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "shortlist/error.hpp"

namespace shortlist {

using json = nlohmann::json;

/// Provenance written into every artifact: header comment for line files,
/// top-level keys for JSON documents.
struct Stamp {
  std::string config_hash;
  std::int64_t seed = 0;
};

inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

/// Calls fn(object, line_number) for each record. Blank lines and lines
/// starting with '#' are skipped.
inline void for_each_json_line(std::istream& in, const std::string& source,
                               const std::function<void(const json&, std::size_t)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedRecord, "invalid JSON: " + std::string(e.what()),
                  source + ":" + std::to_string(line_no));
    }
    if (!obj.is_object()) {
      throw Error(ErrorCode::MalformedRecord, "record is not a JSON object",
                  source + ":" + std::to_string(line_no));
    }
    try {
      fn(obj, line_no);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, e.what(), source + ":" + std::to_string(line_no));
    }
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open for reading", path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open for writing", path.string());
  return out;
}

inline void write_stamp_comment(std::ostream& out, const Stamp* stamp) {
  if (stamp != nullptr) {
    out << "# config_hash=" << stamp->config_hash << " seed=" << stamp->seed << "\n";
  }
}

inline void apply_stamp(json& doc, const Stamp* stamp) {
  if (stamp != nullptr) {
    doc["config_hash"] = stamp->config_hash;
    doc["seed"] = stamp->seed;
  }
}

inline json read_json_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedRecord, e.what(), path.string());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& doc) {
  auto out = open_output(path);
  out << doc.dump(2) << "\n";
}

}  // namespace shortlist
