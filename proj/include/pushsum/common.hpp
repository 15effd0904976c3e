#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <stdexcept>
#include <string>

namespace pushsum {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Exact positivity pattern of a nonnegative matrix. Row-major so that the
/// boolean-semiring product can OR whole rows.
using SupportPattern = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Input outside an operation's mathematical domain (zero vector, negative entry, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A numerical estimator could not produce a value (collapse, non-primitive horizon).
class EstimatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The product never became weakly primitive within the simulated horizon.
class NotPrimitiveError : public EstimatorError {
 public:
  using EstimatorError::EstimatorError;
};

/// Malformed or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Refusal to analyse a process that cannot mix (every packet dropped).
class DegenerateProcessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pushsum
