#pragma once

#include <string>
#include <vector>

#include "emoflow/numerics/autodiff.hpp"
#include "emoflow/numerics/params.hpp"
#include "emoflow/numerics/rng.hpp"

// Small building blocks whose weights live in a caller-owned ParamSet.

namespace emoflow::nn {

using ad::Tape;
using ad::Var;
using numerics::ParamSet;

enum class Init { Scaled, Zero };
enum class Activation { Tanh, Swish };

/// y = x W + b with W: in x out, b: 1 x out.
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  int in = 0;
  int out = 0;

  static Linear create(ParamSet& params, const std::string& prefix, int in, int out, numerics::Rng& rng,
                       Init init = Init::Scaled);
  Var operator()(Tape& tape, const ParamSet& params, Var x) const;
};

/// Perceptron with the activation between layers and a linear output.
struct Mlp {
  std::vector<Linear> layers;
  Activation activation = Activation::Tanh;

  /// `widths` = {in, hidden..., out}. The output layer is zero-initialized when requested.
  static Mlp create(ParamSet& params, const std::string& prefix, const std::vector<int>& widths,
                    numerics::Rng& rng, Activation activation, bool zero_output);
  Var operator()(Tape& tape, const ParamSet& params, Var x) const;
  int in() const { return layers.front().in; }
  int out() const { return layers.back().out; }
};

Var activate(Activation a, Var x);

}  // namespace emoflow::nn
