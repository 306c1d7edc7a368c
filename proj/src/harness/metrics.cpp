#include "emoflow/harness/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/linalg.hpp"
#include "emoflow/numerics/optim.hpp"

namespace emoflow::harness {

std::string comparator_symbol(Comparator c) {
  switch (c) {
    case Comparator::Less: return "<";
    case Comparator::LessEqual: return "<=";
    case Comparator::Greater: return ">";
    case Comparator::GreaterEqual: return ">=";
  }
  return "?";
}

std::optional<bool> Metric::pass() const {
  if (!threshold) return std::nullopt;
  if (!std::isfinite(value)) return false;
  switch (comparator) {
    case Comparator::Less: return value < *threshold;
    case Comparator::LessEqual: return value <= *threshold;
    case Comparator::Greater: return value > *threshold;
    case Comparator::GreaterEqual: return value >= *threshold;
  }
  return false;
}

void MetricsReport::add(const std::string& name, double value, const std::string& unit) {
  metrics_.push_back({name, value, unit, std::nullopt, Comparator::GreaterEqual, ""});
}

void MetricsReport::check(const std::string& name, double value, const std::string& unit, Comparator cmp,
                          double threshold, const std::string& criterion) {
  metrics_.push_back({name, value, unit, threshold, cmp, criterion});
}

const Metric* MetricsReport::find(const std::string& name) const {
  for (const auto& m : metrics_)
    if (m.name == name) return &m;
  return nullptr;
}

bool MetricsReport::all_passed() const {
  for (const auto& m : metrics_)
    if (m.threshold && !*m.pass()) return false;
  return true;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : metrics_) {
    nlohmann::json r = {{"name", m.name}, {"unit", m.unit}};
    // Non-finite values have no JSON number form.
    if (std::isfinite(m.value))
      r["value"] = m.value;
    else
      r["value"] = nullptr;
    if (m.threshold) {
      r["threshold"] = *m.threshold;
      r["comparator"] = comparator_symbol(m.comparator);
      r["pass"] = *m.pass();
      r["criterion"] = m.criterion;
    }
    rows.push_back(std::move(r));
  }
  return {{"metrics", rows}, {"all_passed", all_passed()}};
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "name,value,unit,comparator,threshold,pass,criterion\n";
  for (const auto& m : metrics_) {
    os << m.name << ',' << m.value << ',' << m.unit << ',';
    if (m.threshold)
      os << comparator_symbol(m.comparator) << ',' << *m.threshold << ',' << (*m.pass() ? "true" : "false") << ','
         << m.criterion;
    else
      os << ",,,";
    os << '\n';
  }
  return os.str();
}

void MetricsReport::save(const std::string& json_path, const std::string& csv_path) const {
  std::ofstream j(json_path);
  std::ofstream c(csv_path);
  if (!j || !c) throw DataError("metrics: cannot write report files");
  j << to_json().dump(2) << '\n';
  c << to_csv();
}

Vector OracleClassifier::features(const Matrix& beta) const {
  if (beta.rows() < 2) throw ArgumentError("oracle: sequences need at least two frames");
  const Eigen::RowVectorXd mu = beta.colwise().mean();
  const Eigen::RowVectorXd sd =
      ((beta.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(beta.rows() - 1)).sqrt();
  Vector f(2 * beta.cols());
  f << mu.transpose(), sd.transpose();
  if (mean_.size() == f.size()) f = (f - mean_).cwiseQuotient(scale_);
  return f;
}

OracleClassifier OracleClassifier::train(const context::Dataset& ds, int classes, int steps, std::uint64_t seed) {
  if (ds.sequences.empty()) throw DataError("oracle: empty training set");
  if (classes < 2 || steps < 1) throw ArgumentError("oracle: need >= 2 classes and >= 1 step");
  OracleClassifier o;
  const auto n = static_cast<Eigen::Index>(ds.sequences.size());
  Matrix x(n, 2 * ds.sequences[0].beta.cols());
  Matrix y = Matrix::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = ds.sequences[static_cast<std::size_t>(i)];
    x.row(i) = o.features(s.beta).transpose();
    if (s.emotion < 0 || s.emotion >= classes) throw DataError("oracle: class id out of range");
    y(i, s.emotion) = 1.0;
  }
  o.mean_ = x.colwise().mean().transpose();
  o.scale_ = ((x.rowwise() - o.mean_.transpose()).array().square().colwise().mean().sqrt() + 1e-8).matrix().transpose();
  x = (x.rowwise() - o.mean_.transpose()).array().rowwise() / o.scale_.transpose().array();

  // Full-batch softmax regression with a small weight penalty, small random start.
  numerics::Rng rng(seed);
  numerics::ParamSet p;
  p.add("w", rng.normal_matrix(x.cols(), classes, 0.01));
  p.add("b", Matrix::Zero(1, classes));
  auto opt = numerics::OptimizerState::fresh(p, numerics::AdamConfig{0.05});
  constexpr double kDecay = 1e-3;
  for (int it = 0; it < steps; ++it) {
    Matrix logits = (x * p.value(0)).rowwise() + p.value(1).row(0);
    logits.colwise() -= logits.rowwise().maxCoeff();
    Matrix prob = logits.array().exp();
    prob.array().colwise() /= prob.rowwise().sum().array();
    const Matrix delta = (prob - y) / static_cast<double>(n);
    numerics::ParamSet g = p.zeros_like();
    g.set(0, x.transpose() * delta + kDecay * p.value(0));
    g.set(1, delta.colwise().sum());
    numerics::adam_update(p, g, opt);
  }
  o.weights_ = p.value(0);
  o.bias_ = p.value(1).row(0).transpose();
  return o;
}

int OracleClassifier::predict(const Matrix& beta) const {
  if (beta.cols() * 2 != weights_.rows()) throw ArgumentError("oracle: coefficient width mismatch");
  const Vector score = weights_.transpose() * features(beta) + bias_;
  Eigen::Index best = 0;
  score.maxCoeff(&best);
  return static_cast<int>(best);
}

double OracleClassifier::accuracy(const context::Dataset& ds) const {
  if (ds.sequences.empty()) throw DataError("oracle: empty evaluation set");
  int ok = 0;
  for (const auto& s : ds.sequences) ok += predict(s.beta) == s.emotion;
  return static_cast<double>(ok) / static_cast<double>(ds.sequences.size());
}

namespace {

void check_runs(const std::vector<Matrix>& runs) {
  if (runs.size() < 2) throw ArgumentError("metrics: at least two runs are required");
  for (const auto& r : runs)
    if (r.rows() != runs[0].rows() || r.cols() != runs[0].cols()) throw ArgumentError("metrics: run shape mismatch");
}

Matrix run_mean(const std::vector<Matrix>& runs) {
  Matrix mean = Matrix::Zero(runs[0].rows(), runs[0].cols());
  for (const auto& r : runs) mean += r;
  return mean / static_cast<double>(runs.size());
}

}  // namespace

double mean_pairwise_l2(const std::vector<Matrix>& runs) {
  check_runs(runs);
  double total = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < runs.size(); ++a)
    for (std::size_t b = a + 1; b < runs.size(); ++b, ++pairs)
      total += (runs[a] - runs[b]).rowwise().norm().mean();
  return total / pairs;
}

double across_run_variance(const std::vector<Matrix>& runs, const std::vector<int>& cols) {
  check_runs(runs);
  if (cols.empty()) throw ArgumentError("metrics: empty column set");
  const Matrix mean = run_mean(runs);
  double total = 0.0;
  for (const auto& r : runs)
    for (int c : cols) total += (r.col(c) - mean.col(c)).squaredNorm();
  return total / static_cast<double>((runs.size() - 1) * cols.size() * static_cast<std::size_t>(runs[0].rows()));
}

double trace_spread(const std::vector<Matrix>& runs) {
  check_runs(runs);
  const Matrix mean = run_mean(runs);
  double total = 0.0;
  for (const auto& r : runs) total += (r - mean).squaredNorm();
  return total / static_cast<double>((runs.size() - 1) * static_cast<std::size_t>(runs[0].rows()));
}

double channel_correlation(const Matrix& frames, const std::vector<int>& cols, const Vector& signal) {
  if (cols.empty()) throw ArgumentError("metrics: empty column set");
  Vector channel = Vector::Zero(frames.rows());
  for (int c : cols) channel += frames.col(c);
  return numerics::pearson(channel / static_cast<double>(cols.size()), signal);
}

double pose_audio_correlation(const std::vector<Matrix>& poses, const std::vector<Vector>& energies) {
  if (poses.size() != energies.size() || poses.empty()) throw ArgumentError("metrics: pose/energy count mismatch");
  std::vector<double> speed, energy;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Matrix& p = poses[i];
    if (p.rows() != energies[i].size()) throw ArgumentError("metrics: pose/energy length mismatch");
    for (Eigen::Index t = 1; t < p.rows(); ++t) {
      speed.push_back((p.row(t) - p.row(t - 1)).norm());
      energy.push_back(energies[i][t]);
    }
  }
  return numerics::pearson(Eigen::Map<const Vector>(speed.data(), static_cast<Eigen::Index>(speed.size())),
                           Eigen::Map<const Vector>(energy.data(), static_cast<Eigen::Index>(energy.size())));
}

namespace {

Matrix class_centroids(const gen::LatentBank& bank, int classes) {
  Matrix c = Matrix::Zero(classes, bank.latents.cols());
  Vector count = Vector::Zero(classes);
  for (int i = 0; i < bank.size(); ++i) {
    const int l = bank.labels[static_cast<std::size_t>(i)];
    if (l < 0 || l >= classes) throw ArgumentError("metrics: label out of range");
    c.row(l) += bank.latents.row(i);
    count[l] += 1.0;
  }
  for (int l = 0; l < classes; ++l) {
    if (count[l] == 0) throw DataError("metrics: class " + std::to_string(l) + " has no latents");
    c.row(l) /= count[l];
  }
  return c;
}

}  // namespace

double nearest_centroid_accuracy(const gen::LatentBank& train, const gen::LatentBank& test, int classes) {
  if (test.size() == 0) throw DataError("metrics: empty test bank");
  const Matrix centroids = class_centroids(train, classes);
  int ok = 0;
  for (int i = 0; i < test.size(); ++i) {
    Eigen::Index best = 0;
    (centroids.rowwise() - test.latents.row(i)).rowwise().squaredNorm().minCoeff(&best);
    ok += best == test.labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(ok) / test.size();
}

std::vector<double> class_covariance_traces(const gen::LatentBank& bank, int classes) {
  std::vector<double> out;
  for (int l = 0; l < classes; ++l) {
    const gen::LatentBank s = bank.subset(l);
    if (s.size() < 2) throw DataError("metrics: class " + std::to_string(l) + " needs at least two latents");
    const Matrix centered = s.latents.rowwise() - s.latents.colwise().mean();
    out.push_back(centered.squaredNorm() / (s.size() - 1));
  }
  return out;
}

}  // namespace emoflow::harness
