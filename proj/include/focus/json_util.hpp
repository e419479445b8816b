#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "focus/error.hpp"

namespace focus {

// Reads a JSON object while tracking consumed keys; finish() rejects
// anything left over so typos in configs fail loudly.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& obj, std::string context);

  bool has(const std::string& key) const { return obj_.contains(key); }
  const nlohmann::json& at(const std::string& key);

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) fail(ErrorKind::config, context_ + ": missing key '" + key + "'");
    return convert<T>(key);
  }

  void finish() const;

 private:
  template <typename T>
  T convert(const std::string& key) {
    seen_.insert(key);
    try {
      return obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::config, context_ + "." + key + ": " + e.what());
    }
  }

  const nlohmann::json& obj_;
  std::string context_;
  std::set<std::string> seen_;
};

nlohmann::json read_json_file(const std::string& path);
std::vector<nlohmann::json> read_json_lines(const std::string& path);
std::string read_text_file(const std::string& path);

// Creates parent directories. Output files are written once; existing files
// are an io error unless overwrite is set.
void write_text_file(const std::string& path, const std::string& content, bool overwrite = false);

// Shortest round-trip representation; used for every double written to CSV.
std::string format_double(double v);

// Lowercase hex SHA-1 of "blob <size>\0<content>", the git object id.
std::string git_blob_hash(const std::string& content);

}  // namespace focus
