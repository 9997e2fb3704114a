#pragma once

#include <stdexcept>
#include <string>

namespace ppsm {

/// Action outside the battery's admissible power envelope.
class InfeasibleAction : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed input file; carries the offending 1-based line when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Persisted artifact failed its checksum, digest or version check.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Persisted artifact does not match the shapes of the current configuration.
class ShapeMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ppsm
