#pragma once

#include <stdexcept>
#include <string>

namespace dyhgn {

// Shapes of operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An index (node, row, class) falls outside its valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Unsupported option, unknown enum code, bad hyperparameter.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input data (event logs, labels, splits).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke an API precondition (non-scalar loss, missing gradient).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Metric undefined for the given labels (no positives, single class).
class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Lookup into an embedding or parameter table failed.
class ParameterError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dyhgn
