#pragma once

#include <stdexcept>
#include <string>

namespace knockoff {

/// Base class for all library errors so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A symmetric matrix handed to a factorization routine is not positive
/// definite (a pivot fell at or below the pivot tolerance).
struct NotPositiveDefinite : Error {
  using Error::Error;
};

/// A rank-one Cholesky downdate would leave the factored matrix indefinite.
struct DowndateBreaksPD : Error {
  using Error::Error;
};

/// An iterative routine hit its iteration cap before reaching tolerance.
struct ConvergenceFailure : Error {
  using Error::Error;
};

/// A covariance input is singular or numerically indistinguishable from it.
struct DegenerateCovariance : Error {
  using Error::Error;
};

/// A coordinate-descent step left its feasible interval.
struct StepInfeasible : Error {
  using Error::Error;
};

/// The coordinate-update polynomial has no root in the feasible interval.
struct NoRootInInterval : Error {
  using Error::Error;
};

/// No scaling factor on the search grid keeps the S-matrix feasible.
struct NoFeasibleGamma : Error {
  using Error::Error;
};

/// The supplied S-matrix violates joint-covariance feasibility.
struct InfeasibleS : Error {
  using Error::Error;
};

/// Too few observations for the requested construction.
struct InsufficientRows : Error {
  using Error::Error;
};

/// The design matrix does not have full column rank.
struct RankDeficientX : Error {
  using Error::Error;
};

/// An augmented regression design is rank deficient.
struct RankDeficient : Error {
  using Error::Error;
};

/// A column or row index is out of range.
struct IndexOutOfRange : Error {
  using Error::Error;
};

/// Input data is unusable (e.g. a zero-variance column).
struct DegenerateData : Error {
  using Error::Error;
};

/// A configuration or generator parameter is out of its legal range.
struct InvalidParams : Error {
  using Error::Error;
};

/// An enumerated kind string/value is not recognized.
struct InvalidKind : Error {
  using Error::Error;
};

/// File input/output failed.
struct IoError : Error {
  using Error::Error;
};

}  // namespace knockoff
