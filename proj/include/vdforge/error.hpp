#pragma once

#include <stdexcept>
#include <string>

namespace vdforge {

// Base class for every failure the library reports. The CLI maps these to
// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A manifest line failed to parse or validate. `line()` is 1-based.
class ManifestError : public Error {
 public:
  ManifestError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace vdforge
