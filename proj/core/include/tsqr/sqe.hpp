#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "tsqr/errors.hpp"
#include "tsqr/qreg.hpp"

namespace tsqr::sqe {

/// Quantile levels eps, eps + step, ..., 1 - eps (the last level is always 1 - eps).
struct TauGrid {
  double epsilon = 0.05;
  double step = 0.01;
  std::vector<double> levels;

  [[nodiscard]] static TauGrid make(double epsilon = 0.05, double step = 0.01);
  void validate() const;
  [[nodiscard]] double lower() const { return levels.front(); }
  [[nodiscard]] double upper() const { return levels.back(); }
  /// Index of `tau` when it is a grid level (within 1e-12), else -1.
  [[nodiscard]] int index_of(double tau) const noexcept;
  /// Index of the closest grid level.
  [[nodiscard]] std::size_t nearest(double tau) const noexcept;
};

struct PathOptions {
  bool warm_start = true;  // sequential ascending solves from the previous vertex
  int threads = 1;         // used only when warm_start is false
  qreg::SolverOptions solver{};
};

/// A solver failure at one level of the path.
class LevelFailure : public NumericError {
 public:
  LevelFailure(double tau, const std::string& what) : NumericError(what), tau_(tau) {}
  [[nodiscard]] double tau() const noexcept { return tau_; }

 private:
  double tau_;
};

struct QuantilePath {
  TauGrid grid;
  std::vector<qreg::QrSolution> estimates;  // one per grid level
  qreg::WeightSpec weights_used;
  std::shared_ptr<const qreg::LaggedDesign> design;
  Eigen::VectorXd weights;

  [[nodiscard]] std::size_t n() const { return design->series_length; }
  [[nodiscard]] std::size_t p() const { return design->p; }
  [[nodiscard]] bool intercept() const { return design->intercept; }
};

[[nodiscard]] QuantilePath estimate_path(const qreg::LaggedDesign& design,
                                         const qreg::WeightSpec& wspec, const TauGrid& grid,
                                         const PathOptions& opts = {});

/// Same with precomputed weights (bootstrap subsamples carry rescaled weights).
[[nodiscard]] QuantilePath estimate_path(std::shared_ptr<const qreg::LaggedDesign> design,
                                         Eigen::VectorXd weights, const qreg::WeightSpec& wspec,
                                         const TauGrid& grid, const PathOptions& opts = {});

/// Stored estimate at a grid level; otherwise a fresh solve warm-started from
/// the nearest level. Throws RangeError outside [eps, 1 - eps].
[[nodiscard]] qreg::QrSolution solve_at(const QuantilePath& path, double tau,
                                        const qreg::SolverOptions& opts = {});
[[nodiscard]] Eigen::VectorXd path_at(const QuantilePath& path, double tau);

/// CSV `tau,coef_0,...,coef_{k-1},objective`.
void write_path_csv(std::ostream& os, const QuantilePath& path);

}  // namespace tsqr::sqe
