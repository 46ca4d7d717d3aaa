#pragma once

#include <stdexcept>
#include <string>

namespace medqr {

/// Every recoverable failure in the library (bad input files, violated
/// preconditions) is reported with this exception; messages are single-line
/// so the CLI can print them verbatim.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Load failure tied to a line of an input file.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace medqr
