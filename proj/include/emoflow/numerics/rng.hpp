#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

namespace emoflow::numerics {

/// Explicitly seeded random source. Every stochastic routine takes one of
/// these by reference; there is no global generator anywhere in the project.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller; no cached second variate so the state
  /// is fully captured by the engine.
  double normal();

  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0);
  Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo = 0.0, double hi = 1.0);

  /// Chi-squared with `dof` degrees of freedom.
  double chi_squared(double dof);

  /// Derives an independent stream, e.g. one per generated sequence.
  Rng split(std::uint64_t stream) const;

  std::string state() const;
  void restore(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used to derive stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace emoflow::numerics
