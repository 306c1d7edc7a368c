#pragma once

#include <cstdint>

#include "emoflow/numerics/autodiff.hpp"
#include "emoflow/numerics/params.hpp"
#include "emoflow/numerics/rng.hpp"

namespace emoflow::latent {

using numerics::Matrix;
using numerics::Vector;

inline constexpr double kDefaultDof = 2.0;

/// Multivariate t with identity scale matrix.
struct StudentTComponent {
  Vector mean;
  double dof = kDefaultDof;
};

/// Equal-weight mixture of identity-scale t components sharing one dof.
struct Smm {
  Matrix means;  // C x D
  double dof = kDefaultDof;

  int classes() const { return static_cast<int>(means.rows()); }
  int dim() const { return static_cast<int>(means.cols()); }
  StudentTComponent component(int e) const;
  double weight() const { return 1.0 / classes(); }
};

double t_logpdf(const Vector& z, const StudentTComponent& comp);
double smm_logpdf(const Vector& z, const Smm& m);
double class_logpdf(const Vector& z, int e, const Smm& m);
/// z = mu_e + g * sqrt(dof / u), g ~ N(0, I), u ~ chi^2_dof.
Vector sample_class(int e, const Smm& m, numerics::Rng& rng);
/// Means drawn from N(0, I).
Smm init_means(int classes, int dim, std::uint64_t seed, double dof = kDefaultDof);

double gaussian_logpdf(const Vector& z);
Vector sample_gaussian(int dim, numerics::Rng& rng);

// Batched, differentiable forms (one latent per row, B x 1 results).
ad::Var t_logpdf_rows(ad::Var z, ad::Var means, double dof);
ad::Var gaussian_logpdf_rows(ad::Var z);

}  // namespace emoflow::latent
