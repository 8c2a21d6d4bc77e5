#pragma once

#include <stdexcept>
#include <string>

namespace millie {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/axis mismatch between tensors; message names the offending axis.
struct DimensionError : Error {
  using Error::Error;
};

// Out-of-range element or class index.
struct IndexError : Error {
  using Error::Error;
};

// Operation received a bag with zero instances.
struct EmptyBagError : Error {
  using Error::Error;
};

// Input carries no usable signal (constant channel, zero variance, ...).
struct DegenerateInputError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration, including unknown keys.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed dataset content (unknown label, duplicate id, ...).
struct DataError : Error {
  using Error::Error;
};

// Filesystem or codec failure.
struct IoError : Error {
  using Error::Error;
};

// Stored bytes fail their integrity check (CRC mismatch, truncation).
struct IntegrityError : Error {
  using Error::Error;
};

// Checkpoint written by an unsupported format version.
struct VersionError : Error {
  using Error::Error;
};

// Optimization cannot continue (non-finite gradient or loss).
struct TrainingError : Error {
  using Error::Error;
};

// Metric is undefined for the given inputs (single-class ROC, empty matrix).
struct UndefinedMetricError : Error {
  using Error::Error;
};

}  // namespace millie
