#include "emoflow/numerics/linalg.hpp"

#include <cmath>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/rng.hpp"

namespace emoflow::numerics {

Eigen::VectorXd constrained_lsq_weights(const Eigen::VectorXd& target, const Eigen::MatrixXd& neighbors,
                                        double ridge) {
  const Eigen::Index k = neighbors.rows();
  if (k == 0) throw ArgumentError("constrained_lsq_weights: at least one neighbor is required");
  if (neighbors.cols() != target.size()) throw ArgumentError("constrained_lsq_weights: dimension mismatch");
  if (ridge < 0.0) throw ArgumentError("constrained_lsq_weights: ridge must be nonnegative");

  Eigen::MatrixXd diff = (-neighbors).rowwise() + target.transpose();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (diff.row(j).isZero(0.0)) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(k);
      w[j] = 1.0;
      return w;
    }
  }
  if (k == 1) return Eigen::VectorXd::Ones(1);

  Eigen::MatrixXd gram = diff * diff.transpose();
  const double reg = ridge * gram.trace() / static_cast<double>(k);
  gram.diagonal().array() += reg;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);

  Eigen::VectorXd w;
  if (reg > 0.0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    w = ldlt.solve(ones);
  }
  if (reg <= 0.0 || !w.allFinite()) w = gram.completeOrthogonalDecomposition().solve(ones);
  const double total = w.sum();
  if (!std::isfinite(total) || total == 0.0) throw NumericError("constrained_lsq_weights: degenerate Gram system");
  return w / total;
}

PcaResult pca_power_iteration(const Eigen::MatrixXd& data, int k, std::uint64_t seed, int max_iterations,
                              double tolerance) {
  if (data.rows() < 2) throw ArgumentError("pca: need at least two rows");
  if (k < 1 || k > data.cols()) throw ArgumentError("pca: component count out of range");
  PcaResult r;
  r.mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - r.mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);
  r.components.resize(data.cols(), k);
  r.variances.resize(k);
  Rng rng(seed);
  for (int c = 0; c < k; ++c) {
    Eigen::VectorXd v = rng.normal_vector(data.cols()).normalized();
    double lambda = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
      Eigen::VectorXd w = cov * v;
      const double norm = w.norm();
      if (norm == 0.0) break;
      w /= norm;
      // Fix the sign so convergence is measured on a consistent orientation.
      if (w.dot(v) < 0) w = -w;
      const double delta = (w - v).norm();
      v = w;
      lambda = norm;
      if (delta < tolerance) break;
    }
    lambda = v.dot(cov * v);
    // Deterministic sign convention: largest-magnitude entry positive.
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0) v = -v;
    r.components.col(c) = v;
    r.variances[c] = lambda;
    cov -= lambda * v * v.transpose();
  }
  r.projected = centered * r.components;
  return r;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw ArgumentError("pearson: size mismatch or too short");
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double denom = std::sqrt((da * da).sum() * (db * db).sum());
  if (denom == 0.0) return 0.0;
  return (da * db).sum() / denom;
}

}  // namespace emoflow::numerics
