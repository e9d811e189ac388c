#pragma once

#include <stdexcept>
#include <string>

namespace samct {

// Each error family maps onto one CLI exit code (see cli.hpp).

/// Invalid configuration: bad profile, inconsistent switches, unknown mode.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or malformed input data: files, manifests, volumes, rasters.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A runtime contract was broken, e.g. a frozen parameter changed.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace samct
