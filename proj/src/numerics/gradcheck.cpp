#include "emoflow/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "emoflow/errors.hpp"

namespace emoflow::numerics {

ParamSet finite_diff_grad(const ScalarLoss& loss, const ParamSet& params, double h) {
  if (!(h > 0.0)) throw ArgumentError("finite_diff_grad: step must be positive");
  ParamSet probe = params;
  ParamSet out = params.zeros_like();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = probe.mutable_value(i);
    Matrix& g = out.mutable_value(i);
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double orig = p.data()[k];
      p.data()[k] = orig + h;
      const double fp = loss(probe);
      p.data()[k] = orig - h;
      const double fm = loss(probe);
      p.data()[k] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        std::ostringstream os;
        os << "finite_diff_grad: non-finite loss probing '" << params.name(i) << "' element " << k;
        throw NumericError(os.str());
      }
      g.data()[k] = (fp - fm) / (2.0 * h);
    }
  }
  return out;
}

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

double GradCheckReport::max_relative_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_relative_error);
  return m;
}

const GradCheckEntry& GradCheckReport::worst() const {
  if (entries.empty()) throw ArgumentError("GradCheckReport::worst on an empty report");
  return *std::max_element(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.max_relative_error < b.max_relative_error;
  });
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed() ? "PASS" : "FAIL") << " max rel err " << max_relative_error() << " (tol " << tolerance << ")";
  if (!entries.empty()) {
    const auto& w = worst();
    os << ", worst '" << w.name << "'[" << w.worst_row << "," << w.worst_col << "] analytic " << w.analytic
       << " numeric " << w.numeric;
  }
  return os.str();
}

GradCheckReport grad_check(const ScalarLoss& loss, const ParamSet& analytic, const ParamSet& params, double h,
                           double tol) {
  if (!analytic.same_layout(params)) throw ConfigError("grad_check: analytic gradient layout mismatch");
  const ParamSet numeric = finite_diff_grad(loss, params, h);
  GradCheckReport report;
  report.point = params;
  report.step = h;
  report.tolerance = tol;
  for (std::size_t i = 0; i < params.size(); ++i) {
    GradCheckEntry e;
    e.name = params.name(i);
    const Matrix& a = analytic.value(i);
    const Matrix& n = numeric.value(i);
    bool first = true;
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const double err = relative_error(a(r, c), n(r, c));
        if (first || err > e.max_relative_error) {
          first = false;
          e.max_relative_error = err;
          e.worst_row = r;
          e.worst_col = c;
          e.analytic = a(r, c);
          e.numeric = n(r, c);
        }
      }
    report.entries.push_back(e);
  }
  return report;
}

GradCheckReport grad_check(const DifferentiableLoss& loss, const ParamSet& params, double h, double tol) {
  const ParamSet analytic = loss(params).second;
  return grad_check([&](const ParamSet& p) { return loss(p).first; }, analytic, params, h, tol);
}

}  // namespace emoflow::numerics
