#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace focus {

enum class ErrorKind {
  usage,
  config,
  shape,
  numerical,
  io,
  environment,
  benchmark,
  internal,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries a category so the CLI can
// print a machine-parsable one-liner and pick an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace focus
