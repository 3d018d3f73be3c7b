#pragma once

#include <stdexcept>
#include <string>

namespace reach {

// Tensor or parameter shapes that do not fit an operation.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Misuse of a gradient tape (foreign variable, second backward, detached loss).
struct GraphError : std::logic_error {
  using std::logic_error::logic_error;
};

// Bad input data. The CLI maps everything below to exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateInputError : DataError {
  using DataError::DataError;
};

struct TopologyError : DataError {
  using DataError::DataError;
};

struct WorkspaceError : DataError {
  using DataError::DataError;
};

struct FormatError : DataError {
  using DataError::DataError;
};

struct HeaderError : FormatError {
  using FormatError::FormatError;
};

struct VersionError : FormatError {
  using FormatError::FormatError;
};

struct TruncatedError : FormatError {
  using FormatError::FormatError;
};

// NaN or infinity produced during training (exit code 4).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace reach
