#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "emoflow/context/synthetic.hpp"
#include "emoflow/generators/latent_bank.hpp"
#include "emoflow/generators/rollout.hpp"

namespace emoflow::harness {

using numerics::Matrix;
using numerics::Vector;

enum class Comparator { Less, LessEqual, Greater, GreaterEqual };

struct Metric {
  std::string name;
  double value = 0.0;
  std::string unit;
  std::optional<double> threshold;  // set for acceptance metrics
  Comparator comparator = Comparator::GreaterEqual;
  std::string criterion;  // acceptance criterion label, empty otherwise

  std::optional<bool> pass() const;
};

/// Ordered metric table, emitted as JSON and CSV.
class MetricsReport {
 public:
  void add(const std::string& name, double value, const std::string& unit = "");
  void check(const std::string& name, double value, const std::string& unit, Comparator cmp, double threshold,
             const std::string& criterion);

  const std::vector<Metric>& metrics() const { return metrics_; }
  const Metric* find(const std::string& name) const;
  /// True when every thresholded metric passes.
  bool all_passed() const;

  nlohmann::json to_json() const;
  /// Header: name,value,unit,comparator,threshold,pass,criterion
  std::string to_csv() const;
  void save(const std::string& json_path, const std::string& csv_path) const;

 private:
  std::vector<Metric> metrics_;
};

std::string comparator_symbol(Comparator c);

/// Softmax regression on per-sequence coefficient statistics (frame mean and
/// standard deviation of every coordinate), trained on ground-truth clips.
/// Serves as the emotion oracle for generated sequences.
class OracleClassifier {
 public:
  static OracleClassifier train(const context::Dataset& ds, int classes, int steps, std::uint64_t seed);

  Vector features(const Matrix& beta) const;
  int predict(const Matrix& beta) const;
  double accuracy(const context::Dataset& ds) const;
  int classes() const { return static_cast<int>(weights_.cols()); }

 private:
  Vector mean_, scale_;  // feature standardization
  Matrix weights_;       // F x C
  Vector bias_;          // C
};

/// Mean over seed pairs of the per-frame Euclidean distance averaged over frames.
double mean_pairwise_l2(const std::vector<Matrix>& runs);
/// Unbiased across-run variance of columns `cols`, averaged over frames and columns.
double across_run_variance(const std::vector<Matrix>& runs, const std::vector<int>& cols);
/// Mean over frames of the trace of the across-run covariance.
double trace_spread(const std::vector<Matrix>& runs);
/// Pearson correlation of the frame-mean of columns `cols` against a signal.
double channel_correlation(const Matrix& frames, const std::vector<int>& cols, const Vector& signal);
/// Pearson correlation of ||rho_t - rho_{t-1}|| with energy_t over t >= 1,
/// pooled over clips.
double pose_audio_correlation(const std::vector<Matrix>& poses, const std::vector<Vector>& energies);

/// Nearest class centroid of `train` latents applied to `test` latents.
double nearest_centroid_accuracy(const gen::LatentBank& train, const gen::LatentBank& test, int classes);
/// Trace of the sample covariance of each class's latents.
std::vector<double> class_covariance_traces(const gen::LatentBank& bank, int classes);

}  // namespace emoflow::harness
