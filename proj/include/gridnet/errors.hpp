#pragma once

#include <stdexcept>
#include <string>

namespace gridnet {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or axis disagreement between tensors/layers.
struct DimensionError : Error {
  using Error::Error;
};

// NaN or Inf encountered where finite values are required.
struct NumericError : Error {
  using Error::Error;
};

// Out-of-range class label or element index.
struct IndexError : Error {
  using Error::Error;
};

// Invalid network graph or unsatisfiable architecture constraints.
struct ConstructionError : Error {
  using Error::Error;
};

// Grid cannot tile the requested extents.
struct InfeasibleGridError : Error {
  using Error::Error;
};

// Pretrained parameters do not match the target subgraph.
struct TransplantError : Error {
  using Error::Error;
};

// Malformed file contents (checkpoints, dataset binaries, reports).
struct FormatError : Error {
  using Error::Error;
};

// Invalid experiment configuration; rejected before any training starts.
struct ConfigError : Error {
  using Error::Error;
};

// Failure inside a training worker, tagged with the subdomain index.
struct PipelineError : Error {
  using Error::Error;
};

}  // namespace gridnet
