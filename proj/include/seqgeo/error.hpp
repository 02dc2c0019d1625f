#pragma once

#include <stdexcept>
#include <string>

namespace seqgeo {

// Invalid input to a domain operation (shape mismatch, out-of-range value,
// degenerate feature). The CLI maps it to exit code 1.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unreadable files. The CLI maps it to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace seqgeo
