#pragma once

#include <stdexcept>
#include <string>

namespace wavemat {

/// Bad invocation or parameters supplied by the caller (CLI exit code 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data, files or models that violate a contract (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wavemat
