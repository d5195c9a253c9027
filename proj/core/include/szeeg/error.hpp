#pragma once

#include <stdexcept>
#include <string>

namespace szeeg {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file or stream (bad headers, truncation, unparsable tokens).
struct FormatError : Error {
  using Error::Error;
};

// Invalid argument or configuration value.
struct ParamError : Error {
  using Error::Error;
};

// Tensor/matrix dimension mismatch.
struct ShapeError : Error {
  using Error::Error;
};

// Training failure (divergence, degenerate training set).
struct TrainError : Error {
  using Error::Error;
};

}  // namespace szeeg
