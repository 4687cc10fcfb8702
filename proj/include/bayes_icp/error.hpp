#pragma once

#include <stdexcept>
#include <string>

namespace bayes_icp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (bad sizes, out-of-range arguments).
struct InvalidArgument : Error {
  using Error::Error;
};

struct CloudIoError : Error {
  using Error::Error;
};

/// Every candidate pair of a batch was rejected by the distance gate.
struct DegenerateAssociation : Error {
  using Error::Error;
};

/// Closed-form alignment has fewer than three non-collinear pairs.
struct RankDeficient : Error {
  using Error::Error;
};

struct SolverFailure : Error {
  using Error::Error;
};

}  // namespace bayes_icp
