#pragma once

#include <cstdint>
#include <vector>

#include "emoflow/numerics/params.hpp"

namespace emoflow::context {

using numerics::Matrix;
using numerics::Vector;

/// Generator parameters for the synthetic emotional-scene corpus.
///
/// Per frame t of a sequence with class e and identity offset u:
///   lip coords      beta[L] = lip_gain * a_t + offset_e[L] + noise
///   blink coords    beta[B] = offset_e[B] + u[B] + blink pulse + noise
///   other coords    beta[j] = offset_e[j] + u[j] + amp_e[j] sin(2 pi freq_e[j] t / fps + phase_j) + noise
///   pose            rho_t   = (1 - reversion) rho_{t-1} + pose_gain (pose_floor + energy_t) g_t,  rho_{-1} = 0
/// where a_t is the driving signal and energy_t the windowed mean of a^2.
/// The source coefficient beta_0 of a sequence is its identity offset u.
struct SceneSpec {
  int classes = 4;
  int dim = 64;
  int pose_dim = 6;
  int length = 50;
  double fps = 25.0;
  std::vector<int> lip = {0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<int> blink = {8, 9};

  Matrix class_offsets;      // C x D
  Matrix class_amplitudes;   // C x D, >= 0
  Matrix class_frequencies;  // C x D, Hz

  double noise = 0.05;
  double identity_scale = 0.3;
  double lip_gain = 1.0;
  double blink_rate = 0.06;       // pulse starts per frame
  double blink_amplitude = 2.0;
  // Driving signal: two sinusoids with random phases plus smoothed noise.
  double audio_freq_a = 5.0;
  double audio_freq_b = 5.5;
  double audio_noise = 0.1;
  int energy_radius = 2;
  double pose_gain = 0.15;
  double pose_floor = 0.05;
  double pose_reversion = 0.1;

  /// Fills the per-class tables from `seed`: offsets ~ N(0, offset_scale^2),
  /// amplitudes ~ U(0, 0.4), frequencies ~ U(0.2, 1.0) Hz.
  static SceneSpec make_default(std::uint64_t seed, int classes = 4, double offset_scale = 1.0, int dim = 64);
  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
};

/// One synthetic clip. Rows are frames.
struct CoeffSequence {
  Matrix beta;   // T x D
  Matrix pose;   // T x pose_dim
  Matrix audio;  // T x F (F = 1 for the synthetic signal)
  Vector source;  // beta_0, D
  int emotion = 0;

  int length() const { return static_cast<int>(beta.rows()); }
};

struct Dataset {
  SceneSpec spec;
  std::uint64_t seed = 0;
  std::vector<CoeffSequence> sequences;

  int total_frames() const;
};

/// Sequences are generated independently from per-index streams of `seed`.
Dataset synth_dataset(const SceneSpec& spec, int n_sequences, std::uint64_t seed);

/// Windowed mean of squared audio, radius `radius`, edge-clamped. Length T.
Vector audio_energy(const Matrix& audio, int radius);

}  // namespace emoflow::context
