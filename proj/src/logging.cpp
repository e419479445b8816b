#include "focus/logging.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

namespace focus {

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

void Logger::write(std::string_view level, std::string_view event, const nlohmann::ordered_json& fields) {
  if (json_) {
    nlohmann::ordered_json line;
    line["ts"] = timestamp_now();
    line["level"] = level;
    line["event"] = event;
    for (const auto& [k, v] : fields.items()) line[k] = v;
    *out_ << line.dump() << '\n';
  } else {
    *out_ << timestamp_now() << ' ' << level << ' ' << event;
    for (const auto& [k, v] : fields.items()) {
      *out_ << ' ' << k << '=' << (v.is_string() ? v.get<std::string>() : v.dump());
    }
    *out_ << '\n';
  }
  out_->flush();
}

}  // namespace focus
