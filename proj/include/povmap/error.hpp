#pragma once

#include <stdexcept>
#include <string>

namespace povmap {

// Each error kind maps onto one CLI exit code (see cli.hpp).

struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// Metric undefined on the given data (zero variance etc).
struct UndefinedMetricError : std::domain_error {
  using std::domain_error::domain_error;
};

}  // namespace povmap
