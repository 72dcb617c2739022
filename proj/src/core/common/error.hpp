#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace netshaper {

// Error categories surfaced by the core. The C API maps each one onto an
// ns_status code, and the CLI maps those onto process exit codes.
enum class ErrorKind : std::uint8_t {
  Usage,
  Io,
  Validation,
  Domain,
  Parse,
  Config,
  Scheduling,
  Session,
  Auth,
  ParameterMismatch,
  Capacity,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace netshaper
