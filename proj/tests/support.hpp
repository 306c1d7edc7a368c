#pragma once

#include <functional>

#include "emoflow/numerics/autodiff.hpp"
#include "emoflow/numerics/gradcheck.hpp"
#include "emoflow/numerics/ops.hpp"
#include "emoflow/numerics/rng.hpp"

namespace emoflow::testing {

using BuildLoss = std::function<ad::Var(ad::Tape&, const numerics::ParamSet&)>;

/// Tape gradient of a scalar loss against the central-difference oracle.
inline numerics::GradCheckReport check_tape(const numerics::ParamSet& params, const BuildLoss& build,
                                            double h = 1e-6, double tol = 1e-3) {
  ad::Tape tape;
  const ad::Var loss = build(tape, params);
  tape.backward(loss);
  const numerics::ParamSet analytic = tape.grads(params);
  auto value = [&](const numerics::ParamSet& p) {
    ad::Tape t(ad::Tape::Mode::Inference);
    return build(t, p).scalar();
  };
  return numerics::grad_check(value, analytic, params, h, tol);
}

/// Reduces an arbitrary output to a scalar with fixed pseudo-random weights so
/// every output entry contributes a distinct sensitivity.
inline ad::Var probe(ad::Var out, std::uint64_t seed = 99) {
  numerics::Rng rng(seed);
  ad::Tape& t = out.tape();
  return ad::sum(ad::mul(out, t.constant(rng.normal_matrix(out.rows(), out.cols()))));
}

}  // namespace emoflow::testing

namespace emoflow::testing {

/// Adds N(0, scale^2) noise to every parameter so identity initializations
/// stop hiding bugs.
inline void jitter(numerics::ParamSet& params, double scale, std::uint64_t seed) {
  numerics::Rng rng(seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    numerics::Matrix& m = params.mutable_value(i);
    m += rng.normal_matrix(m.rows(), m.cols(), scale);
  }
}

/// Determinant by cofactor expansion along the first row.
inline double cofactor_det(const numerics::Matrix& a) {
  const Eigen::Index n = a.rows();
  if (n == 1) return a(0, 0);
  double det = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    numerics::Matrix minor(n - 1, n - 1);
    for (Eigen::Index r = 1; r < n; ++r)
      for (Eigen::Index c = 0, k = 0; c < n; ++c)
        if (c != j) minor(r - 1, k++) = a(r, c);
    det += ((j % 2 == 0) ? 1.0 : -1.0) * a(0, j) * cofactor_det(minor);
  }
  return det;
}

}  // namespace emoflow::testing
