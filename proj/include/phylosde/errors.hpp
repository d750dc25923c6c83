#pragma once

#include <stdexcept>
#include <string>

namespace phylosde {

// malformed input text; offset is the character position within the source
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

// numerical breakdown: failed factorization, non-finite values,
// degenerate variances
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace phylosde
