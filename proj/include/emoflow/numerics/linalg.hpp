#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace emoflow::numerics {

inline constexpr double kDefaultRidge = 1e-6;

/// Weights w minimizing ||target - sum_k w_k n_k||^2 subject to sum_k w_k = 1,
/// where n_k are the rows of `neighbors`. Solved through the local Gram matrix
/// G_jk = (target - n_j).(target - n_k), regularized by ridge * trace(G) / K.
/// A neighbor that coincides with the target is an exact minimizer and is
/// returned as a one-hot weight vector.
Eigen::VectorXd constrained_lsq_weights(const Eigen::VectorXd& target, const Eigen::MatrixXd& neighbors,
                                        double ridge = kDefaultRidge);

struct PcaResult {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd components;  // D x k, unit columns
  Eigen::VectorXd variances;   // k, descending
  Eigen::MatrixXd projected;   // N x k
};

/// Top-k principal components of the rows of `data`, by power iteration with
/// deflation on the sample covariance.
PcaResult pca_power_iteration(const Eigen::MatrixXd& data, int k, std::uint64_t seed = 0,
                              int max_iterations = 20000, double tolerance = 1e-13);

/// Pearson correlation; 0 when either input has zero variance.
double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace emoflow::numerics
