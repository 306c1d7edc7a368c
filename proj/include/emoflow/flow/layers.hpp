#pragma once

#include <span>
#include <string>
#include <vector>

#include "emoflow/numerics/autodiff.hpp"
#include "emoflow/numerics/nn.hpp"
#include "emoflow/numerics/params.hpp"
#include "emoflow/numerics/rng.hpp"

// Flow layers operate on batches with one sample per row. Every forward
// returns the transformed batch and a B x 1 column of log-determinants.

namespace emoflow::flow {

using ad::Tape;
using ad::Var;
using numerics::Matrix;
using numerics::ParamSet;
using numerics::Vector;

struct LayerOutput {
  Var value;
  Var logdet;  // B x 1
};

/// Class-selected affine normalization h = (x - mu_e) / delta_e, with
/// delta stored as log delta. All classes start at mu = 0, delta = 1.
struct ActNorm {
  std::size_t mean = 0;       // C x D
  std::size_t log_scale = 0;  // C x D
  int classes = 0;
  int dim = 0;

  static ActNorm create(ParamSet& params, const std::string& prefix, int classes, int dim);
  LayerOutput forward(Tape& tape, const ParamSet& params, Var x, std::span<const int> cls) const;
  Var inverse(Tape& tape, const ParamSet& params, Var h, std::span<const int> cls) const;
};

/// h'' = W h' with W = P L (U + diag(sign * exp(log_s))).
/// P and sign are fixed at creation; L is read from its strict lower triangle
/// and U from its strict upper triangle.
struct InvLinear {
  std::size_t lower = 0;
  std::size_t upper = 0;
  std::size_t log_diag = 0;  // 1 x D
  std::vector<int> permutation;  // row i of P has its one at column permutation[i]
  Vector sign;
  int dim = 0;

  enum class Init { Rotation, Identity };
  static InvLinear create(ParamSet& params, const std::string& prefix, int dim, numerics::Rng& rng,
                          Init init = Init::Rotation);
  /// Parameters chosen so the reconstructed W equals `w` (must be invertible).
  static InvLinear from_matrix(ParamSet& params, const std::string& prefix, const Matrix& w);
  LayerOutput forward(Tape& tape, const ParamSet& params, Var x) const;
  Var inverse(Tape& tape, const ParamSet& params, Var y) const;
  /// Dense W reconstructed from the factors.
  Matrix dense(const ParamSet& params) const;
  double logdet(const ParamSet& params) const;
};

/// Affine coupling: the kept half conditions a shift t and raw scale on the
/// other half, s = exp(clamp(raw, -5, 5)), out = (h + t) * s.
struct Coupling {
  nn::Mlp conditioner;
  int dim = 0;
  int context_dim = 0;
  bool swap = false;  // false: first half conditions the second

  static constexpr double kScaleClamp = 5.0;

  static Coupling create(ParamSet& params, const std::string& prefix, int dim, int context_dim, int hidden,
                         bool swap, numerics::Rng& rng);
  LayerOutput forward(Tape& tape, const ParamSet& params, Var x, Var ctx) const;
  Var inverse(Tape& tape, const ParamSet& params, Var y, Var ctx) const;

 private:
  struct ShiftScale {
    Var shift;
    Var raw;  // clamped
  };
  ShiftScale conditioner_out(Tape& tape, const ParamSet& params, Var kept, Var ctx) const;
  int half() const { return dim / 2; }
  int kept_start() const { return swap ? half() : 0; }
  int moved_start() const { return swap ? 0 : half(); }
};

}  // namespace emoflow::flow
