#pragma once

#include <stdexcept>
#include <string>

namespace pgt {

// Error taxonomy; the CLI maps these onto exit codes (config=2, data=3,
// numeric=4, anything else=1).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/dim mismatches and violated call contracts.
struct ShapeError : Error {
  using Error::Error;
};

// Bad configuration: invalid values, unknown keys, unsupported selectors.
struct ConfigError : Error {
  using Error::Error;
};

// Missing/unreadable datasets, unknown tasks in data, refusal to overwrite.
struct DataError : Error {
  using Error::Error;
};

// NaN/Inf aborts during training.
struct NumericError : Error {
  using Error::Error;
};

// Metrics that are undefined on the given input (empty mask, zero baseline).
struct MetricError : Error {
  using Error::Error;
};

// ParamStore violations: duplicate or unprefixed names.
struct RegistryError : Error {
  using Error::Error;
};

// Checkpoint/container parse or shape-mismatch failures.
struct LoadError : Error {
  using Error::Error;
};

}  // namespace pgt
