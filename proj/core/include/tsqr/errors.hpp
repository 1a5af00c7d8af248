#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tsqr {

/// Bad arguments or data that violate an operation's preconditions.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Requested quantile level lies outside the estimation interval.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Base for failures of a numerical routine on otherwise valid input.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// |y_t| exceeded the overflow guard while simulating.
class GenerationOverflow : public NumericError {
 public:
  GenerationOverflow(std::size_t t, const std::string& what)
      : NumericError(what), step_(t) {}
  [[nodiscard]] std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Weighted design does not have full column rank.
class RankError : public NumericError {
 public:
  RankError(std::vector<Eigen::Index> dependent, const std::string& what)
      : NumericError(what), dependent_(std::move(dependent)) {}
  [[nodiscard]] const std::vector<Eigen::Index>& dependent_columns() const noexcept {
    return dependent_;
  }

 private:
  std::vector<Eigen::Index> dependent_;
};

/// Iterative routine stopped without meeting its convergence test.
/// Carries the best iterate found so far.
class NoConvergence : public NumericError {
 public:
  NoConvergence(Eigen::VectorXd best, std::vector<double> trace, const std::string& what)
      : NumericError(what), best_(std::move(best)), trace_(std::move(trace)) {}
  [[nodiscard]] const Eigen::VectorXd& best_iterate() const noexcept { return best_; }
  [[nodiscard]] const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  Eigen::VectorXd best_;
  std::vector<double> trace_;
};

/// Monte Carlo oracle produced an object violating a structural property
/// (for example a Jacobian that is not positive definite).
class OracleFailure : public NumericError {
 public:
  using NumericError::NumericError;
};

/// No moment-family member has a detectable level derivative at the true level.
class IdentificationFailure : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Too many replications failed in a bootstrap or Monte Carlo run.
class AggregateFailure : public NumericError {
 public:
  AggregateFailure(std::size_t failed, std::size_t total, const std::string& what)
      : NumericError(what), failed_(failed), total_(total) {}
  [[nodiscard]] std::size_t failed() const noexcept { return failed_; }
  [[nodiscard]] std::size_t total() const noexcept { return total_; }

 private:
  std::size_t failed_;
  std::size_t total_;
};

}  // namespace tsqr
