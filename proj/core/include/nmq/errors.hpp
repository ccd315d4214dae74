#pragma once

#include <stdexcept>
#include <string>

namespace nmq {

// Invalid user-supplied configuration: malformed JSON, out-of-range
// parameters, unknown keys, inconsistent table shapes.  Maps to CLI exit
// code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// The requested analysis is not defined for this instance (reducible joint
// chain, vanishing stationary mass, budget caps exceeded, degenerate
// filtering update, insufficient data for a fit).  Maps to CLI exit code 3.
class AnalysisError : public std::runtime_error {
 public:
  explicit AnalysisError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem failures: unwritable output directory, missing input file.
// Maps to CLI exit code 4.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nmq
