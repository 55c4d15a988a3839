#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace ktts {

using Scalar = double;
using Mat = Eigen::MatrixX<Scalar>;
using Vec = Eigen::VectorX<Scalar>;
using Index = Eigen::Index;

// Input data failed validation (bad file, bad text, contract violation).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint file unreadable or incompatible.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ktts
