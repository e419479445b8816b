#pragma once

#include <ostream>
#include <string>
#include <string_view>

#include <json.hpp>

namespace focus {

// Event log on a stream. Text lines look like
//   <ts> info event key=value ...
// and JSON mode writes one {ts, level, event, fields...} object per line.
class Logger {
 public:
  explicit Logger(std::ostream& out, bool json = false) : out_(&out), json_(json) {}

  void info(std::string_view event, const nlohmann::ordered_json& fields = nlohmann::ordered_json::object()) {
    write("info", event, fields);
  }
  void warn(std::string_view event, const nlohmann::ordered_json& fields = nlohmann::ordered_json::object()) {
    write("warn", event, fields);
  }
  void error(std::string_view event, const nlohmann::ordered_json& fields = nlohmann::ordered_json::object()) {
    write("error", event, fields);
  }

  bool json_mode() const { return json_; }

 private:
  void write(std::string_view level, std::string_view event, const nlohmann::ordered_json& fields);

  std::ostream* out_;
  bool json_;
};

// UTC, ISO 8601 with milliseconds.
std::string timestamp_now();

}  // namespace focus
