#pragma once

#include "emoflow/flow/layers.hpp"

namespace emoflow::flow {

struct FlowConfig {
  int dim = 64;
  int classes = 1;
  int context_dim = 0;
  int steps = 8;
  int hidden = 128;
  InvLinear::Init linear_init = InvLinear::Init::Rotation;
};

struct FlowStep {
  ActNorm actnorm;
  InvLinear linear;
  Coupling coupling;
};

/// K flow steps of (actnorm, invertible linear, coupling). `forward` runs the
/// normalizing direction x -> z; `inverse` runs the generative direction.
class FlowStack {
 public:
  static FlowStack create(ParamSet& params, const std::string& prefix, const FlowConfig& config,
                          numerics::Rng& rng);

  /// Steps [first, last) in the normalizing direction.
  LayerOutput forward(Tape& tape, const ParamSet& params, Var x, Var ctx, std::span<const int> cls, int first = 0,
                      int last = -1) const;
  /// Steps [first, last) in reverse order, generative direction.
  Var inverse(Tape& tape, const ParamSet& params, Var z, Var ctx, std::span<const int> cls, int first = 0,
              int last = -1) const;

  struct Point {
    Vector z;
    double logdet = 0.0;
  };
  Point forward(const ParamSet& params, const Vector& x, const Vector& ctx, int cls) const;
  Vector inverse(const ParamSet& params, const Vector& z, const Vector& ctx, int cls) const;
  /// Row-batched evaluation without gradients.
  std::pair<Matrix, Vector> forward_batch(const ParamSet& params, const Matrix& x, const Matrix& ctx,
                                          std::span<const int> cls) const;
  Matrix inverse_batch(const ParamSet& params, const Matrix& z, const Matrix& ctx, std::span<const int> cls) const;

  const FlowConfig& config() const { return config_; }
  const std::vector<FlowStep>& steps() const { return steps_; }

 private:
  void check_inputs(Var x, Var ctx, std::span<const int> cls) const;
  int resolve_last(int last) const;

  FlowConfig config_;
  std::vector<FlowStep> steps_;
};

}  // namespace emoflow::flow
