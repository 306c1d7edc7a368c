#include "emoflow/context/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/rng.hpp"

namespace emoflow::context {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Blink pulse profile over consecutive frames.
constexpr double kPulse[3] = {0.5, 1.0, 0.5};
}  // namespace

SceneSpec SceneSpec::make_default(std::uint64_t seed, int classes, double offset_scale, int dim) {
  SceneSpec s;
  s.classes = classes;
  s.dim = dim;
  numerics::Rng rng(seed);
  s.class_offsets = rng.normal_matrix(classes, s.dim, offset_scale);
  s.class_amplitudes.resize(classes, s.dim);
  s.class_frequencies.resize(classes, s.dim);
  for (Eigen::Index i = 0; i < s.class_amplitudes.size(); ++i) {
    s.class_amplitudes.data()[i] = rng.uniform(0.0, 0.4);
    s.class_frequencies.data()[i] = rng.uniform(0.2, 1.0);
  }
  return s;
}

void SceneSpec::validate() const {
  if (classes < 1) throw ConfigError("scene: class count must be positive");
  if (dim < 2 || pose_dim < 1 || length < 2 || !(fps > 0)) throw ConfigError("scene: invalid dimensions");
  if (class_offsets.rows() != classes || class_offsets.cols() != dim) throw ConfigError("scene: class_offsets shape");
  if (class_amplitudes.rows() != classes || class_amplitudes.cols() != dim)
    throw ConfigError("scene: class_amplitudes shape");
  if (class_frequencies.rows() != classes || class_frequencies.cols() != dim)
    throw ConfigError("scene: class_frequencies shape");
  if ((class_amplitudes.array() < 0).any()) throw ConfigError("scene: amplitudes must be nonnegative");
  if (noise < 0 || identity_scale < 0 || audio_noise < 0 || blink_rate < 0 || blink_rate > 1)
    throw ConfigError("scene: scales and rates must be nonnegative (rates <= 1)");
  std::set<int> lips;
  for (int j : lip) {
    if (j < 0 || j >= dim) throw ConfigError("scene: lip index out of range");
    lips.insert(j);
  }
  for (int j : blink) {
    if (j < 0 || j >= dim) throw ConfigError("scene: blink index out of range");
    if (lips.count(j)) throw ConfigError("scene: lip and blink index sets overlap");
  }
  for (int a = 0; a < classes; ++a)
    for (int b = a + 1; b < classes; ++b)
      if (class_offsets.row(a) == class_offsets.row(b)) throw ConfigError("scene: class offsets must be distinct");
}

int Dataset::total_frames() const {
  int n = 0;
  for (const auto& s : sequences) n += s.length();
  return n;
}

Vector audio_energy(const Matrix& audio, int radius) {
  const Eigen::Index t_len = audio.rows();
  Vector e(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k) {
      const Eigen::Index s = std::clamp<Eigen::Index>(t + k, 0, t_len - 1);
      acc += audio.row(s).squaredNorm();
    }
    e[t] = acc / (2 * radius + 1);
  }
  return e;
}

namespace {

Matrix driving_signal(const SceneSpec& spec, numerics::Rng& rng) {
  const int t_len = spec.length;
  const double pa = rng.uniform(0.0, kTwoPi), pb = rng.uniform(0.0, kTwoPi);
  // Band-limited noise: 3-tap moving average of white noise.
  Vector white(t_len + 2);
  for (Eigen::Index i = 0; i < white.size(); ++i) white[i] = rng.normal();
  Matrix a(t_len, 1);
  for (int t = 0; t < t_len; ++t) {
    const double time = t / spec.fps;
    const double smooth = (white[t] + white[t + 1] + white[t + 2]) / 3.0;
    a(t, 0) = std::sin(kTwoPi * spec.audio_freq_a * time + pa) + std::sin(kTwoPi * spec.audio_freq_b * time + pb) +
              spec.audio_noise * smooth;
  }
  return a;
}

CoeffSequence make_sequence(const SceneSpec& spec, numerics::Rng& rng) {
  CoeffSequence seq;
  const int d = spec.dim, t_len = spec.length;
  seq.emotion = static_cast<int>(rng.index(static_cast<std::size_t>(spec.classes)));
  seq.source = rng.normal_vector(d) * spec.identity_scale;
  seq.audio = driving_signal(spec, rng);
  Vector phase(d);
  for (int j = 0; j < d; ++j) phase[j] = rng.uniform(0.0, kTwoPi);

  std::vector<bool> is_lip(static_cast<std::size_t>(d), false), is_blink(static_cast<std::size_t>(d), false);
  for (int j : spec.lip) is_lip[static_cast<std::size_t>(j)] = true;
  for (int j : spec.blink) is_blink[static_cast<std::size_t>(j)] = true;

  Vector pulse = Vector::Zero(t_len);
  for (int t = 0; t < t_len;) {
    if (rng.bernoulli(spec.blink_rate)) {
      for (int k = 0; k < 3 && t + k < t_len; ++k) pulse[t + k] = kPulse[k];
      t += 3;
    } else {
      ++t;
    }
  }

  const auto e = static_cast<Eigen::Index>(seq.emotion);
  seq.beta.resize(t_len, d);
  for (int t = 0; t < t_len; ++t) {
    const double time = t / spec.fps;
    for (int j = 0; j < d; ++j) {
      const double offset = spec.class_offsets(e, j);
      double v;
      if (is_lip[static_cast<std::size_t>(j)]) {
        v = spec.lip_gain * seq.audio(t, 0) + offset;
      } else if (is_blink[static_cast<std::size_t>(j)]) {
        v = offset + seq.source[j] + spec.blink_amplitude * pulse[t];
      } else {
        v = offset + seq.source[j] +
            spec.class_amplitudes(e, j) * std::sin(kTwoPi * spec.class_frequencies(e, j) * time + phase[j]);
      }
      seq.beta(t, j) = v + spec.noise * rng.normal();
    }
  }

  const Vector energy = audio_energy(seq.audio, spec.energy_radius);
  seq.pose.resize(t_len, spec.pose_dim);
  Vector rho = Vector::Zero(spec.pose_dim);
  for (int t = 0; t < t_len; ++t) {
    rho = (1.0 - spec.pose_reversion) * rho +
          spec.pose_gain * (spec.pose_floor + energy[t]) * rng.normal_vector(spec.pose_dim);
    seq.pose.row(t) = rho.transpose();
  }
  return seq;
}

}  // namespace

Dataset synth_dataset(const SceneSpec& spec, int n_sequences, std::uint64_t seed) {
  spec.validate();
  if (n_sequences < 1) throw ConfigError("synth_dataset: need at least one sequence");
  Dataset ds;
  ds.spec = spec;
  ds.seed = seed;
  numerics::Rng root(seed);
  ds.sequences.reserve(static_cast<std::size_t>(n_sequences));
  for (int i = 0; i < n_sequences; ++i) {
    numerics::Rng rng = root.split(static_cast<std::uint64_t>(i));
    ds.sequences.push_back(make_sequence(spec, rng));
  }
  return ds;
}

}  // namespace emoflow::context
