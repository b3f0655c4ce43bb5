#pragma once

#include <stdexcept>
#include <string>

namespace dasr {

/// Invalid argument values: bad kernel parameters, negative widths, empty ranges.
class ParamError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Shape or size mismatches between tensors, images and kernels.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unreadable, corrupt or version-incompatible files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite losses or other numeric failures during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dasr
