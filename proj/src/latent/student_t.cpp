#include "emoflow/latent/student_t.hpp"

#include <cmath>
#include <numbers>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/ops.hpp"

namespace emoflow::latent {

namespace {

void check_dof(double dof) {
  if (!(dof > 0.0)) throw ArgumentError("student-t: degrees of freedom must be positive");
}

double t_normalizer(double dof, double dim) {
  return std::lgamma(0.5 * (dof + dim)) - std::lgamma(0.5 * dof) - 0.5 * dim * std::log(dof * std::numbers::pi);
}

void check_class(int e, const Smm& m) {
  if (e < 0 || e >= m.classes()) throw ArgumentError("smm: class id " + std::to_string(e) + " out of range");
}

}  // namespace

StudentTComponent Smm::component(int e) const {
  check_class(e, *this);
  return {means.row(e).transpose(), dof};
}

double t_logpdf(const Vector& z, const StudentTComponent& comp) {
  check_dof(comp.dof);
  if (z.size() != comp.mean.size()) throw ArgumentError("t_logpdf: dimension mismatch");
  const double d = static_cast<double>(z.size());
  const double q = (z - comp.mean).squaredNorm();
  return t_normalizer(comp.dof, d) - 0.5 * (comp.dof + d) * std::log1p(q / comp.dof);
}

double smm_logpdf(const Vector& z, const Smm& m) {
  if (m.classes() < 1) throw ArgumentError("smm_logpdf: empty mixture");
  Vector terms(m.classes());
  for (int i = 0; i < m.classes(); ++i) terms[i] = t_logpdf(z, m.component(i));
  const double top = terms.maxCoeff();
  return top + std::log((terms.array() - top).exp().sum()) + std::log(m.weight());
}

double class_logpdf(const Vector& z, int e, const Smm& m) { return t_logpdf(z, m.component(e)); }

Vector sample_class(int e, const Smm& m, numerics::Rng& rng) {
  check_class(e, m);
  check_dof(m.dof);
  const Vector g = rng.normal_vector(m.dim());
  const double u = rng.chi_squared(m.dof);
  return m.means.row(e).transpose() + g * std::sqrt(m.dof / u);
}

Smm init_means(int classes, int dim, std::uint64_t seed, double dof) {
  if (classes < 1 || dim < 1) throw ConfigError("init_means: class count and dimension must be positive");
  check_dof(dof);
  numerics::Rng rng(seed);
  return {rng.normal_matrix(classes, dim), dof};
}

double gaussian_logpdf(const Vector& z) {
  return -0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi) - 0.5 * z.squaredNorm();
}

Vector sample_gaussian(int dim, numerics::Rng& rng) { return rng.normal_vector(dim); }

ad::Var t_logpdf_rows(ad::Var z, ad::Var means, double dof) {
  check_dof(dof);
  const double d = static_cast<double>(z.cols());
  ad::Var q = ad::row_sum(ad::square(ad::sub(z, means)));
  return ad::add_scalar(ad::scale(ad::log1p(ad::scale(q, 1.0 / dof)), -0.5 * (dof + d)), t_normalizer(dof, d));
}

ad::Var gaussian_logpdf_rows(ad::Var z) {
  const double d = static_cast<double>(z.cols());
  return ad::add_scalar(ad::scale(ad::row_sum(ad::square(z)), -0.5), -0.5 * d * std::log(2.0 * std::numbers::pi));
}

}  // namespace emoflow::latent
