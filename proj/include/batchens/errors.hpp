#pragma once

#include <stdexcept>
#include <string>

namespace batchens {

// Error taxonomy maps onto CLI exit codes: config 1, data 2, numeric 3.
// Shape/contract violations are programming errors and also exit with 1.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ContractError : std::logic_error {
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace batchens
