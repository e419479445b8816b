#include "focus/json_util.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

namespace focus {

ObjectReader::ObjectReader(const nlohmann::json& obj, std::string context)
    : obj_(obj), context_(std::move(context)) {
  if (!obj_.is_object()) fail(ErrorKind::config, context_ + ": expected a JSON object");
}

const nlohmann::json& ObjectReader::at(const std::string& key) {
  if (!has(key)) fail(ErrorKind::config, context_ + ": missing key '" + key + "'");
  seen_.insert(key);
  return obj_.at(key);
}

void ObjectReader::finish() const {
  for (const auto& item : obj_.items()) {
    if (!seen_.count(item.key())) {
      fail(ErrorKind::config, context_ + ": unknown key '" + item.key() + "'");
    }
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, path + ": " + e.what());
  }
}

std::vector<nlohmann::json> read_json_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path);
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::io, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_text_file(const std::string& path, const std::string& content, bool overwrite) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (!overwrite && fs::exists(p)) fail(ErrorKind::io, "refusing to overwrite " + path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out << content;
  if (!out) fail(ErrorKind::io, "write failed for " + path);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  const std::string blob = header + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    fail(ErrorKind::internal, "sha1 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    const unsigned char c = digest[i];
    out.push_back(hex[c >> 4]);
    out.push_back(hex[c & 15]);
  }
  return out;
}

}  // namespace focus
