#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "emoflow/numerics/params.hpp"

namespace emoflow::numerics {

using ScalarLoss = std::function<double(const ParamSet&)>;
/// A loss that also reports its analytic gradient.
using DifferentiableLoss = std::function<std::pair<double, ParamSet>(const ParamSet&)>;

/// Central-difference gradient of `loss` with respect to every scalar in `params`.
ParamSet finite_diff_grad(const ScalarLoss& loss, const ParamSet& params, double h);

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  ParamSet point;
  double step = 0.0;
  double tolerance = 0.0;

  double max_relative_error() const;
  const GradCheckEntry& worst() const;
  bool passed() const { return max_relative_error() <= tolerance; }
  std::string summary() const;
};

/// Relative error |a-b| / max(|a|, |b|, 1e-8).
double relative_error(double a, double b);

/// Compares `analytic` against the central-difference oracle.
GradCheckReport grad_check(const ScalarLoss& loss, const ParamSet& analytic, const ParamSet& params, double h,
                           double tol);
GradCheckReport grad_check(const DifferentiableLoss& loss, const ParamSet& params, double h, double tol);

}  // namespace emoflow::numerics
