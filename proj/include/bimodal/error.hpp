#pragma once

#include <stdexcept>
#include <string>

namespace bimodal {

// Bad input data: inconsistent manifests, unreadable files, degenerate pixels.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Bad caller-supplied parameters (shift count, thresholds, flags).
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace bimodal
