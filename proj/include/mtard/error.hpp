#pragma once

#include <stdexcept>
#include <string>

namespace mtard {

enum class ErrorKind {
  invalid_input,
  domain,
  shape_mismatch,
  parse,
  io,
  fingerprint_mismatch,
  version_mismatch,
  role_mismatch,
  config,
  usage,
  numeric,
  state,
};

/// Library-wide exception carrying a machine-readable kind next to the message.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace mtard
