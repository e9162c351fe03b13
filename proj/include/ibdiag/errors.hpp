#pragma once

#include <stdexcept>
#include <string>

namespace ibdiag {

// Bad user input: malformed config, schema violation, unknown keys.
// The CLI maps this to exit status 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An instance is too large for exact enumeration; the caller should fall
// back to Monte-Carlo estimation.
class EnumerationLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A conditional table gives zero mass to every admissible code.
class InconsistentSpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ibdiag
