#include "emoflow/numerics/nn.hpp"

#include <cmath>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/ops.hpp"

namespace emoflow::nn {

Linear Linear::create(ParamSet& params, const std::string& prefix, int in, int out, numerics::Rng& rng, Init init) {
  if (in <= 0 || out <= 0) throw ConfigError("Linear: widths must be positive (" + prefix + ")");
  Linear l;
  l.in = in;
  l.out = out;
  numerics::Matrix w = init == Init::Zero ? numerics::Matrix::Zero(in, out)
                                          : rng.normal_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)));
  l.weight = params.add(prefix + ".weight", std::move(w));
  l.bias = params.add(prefix + ".bias", numerics::Matrix::Zero(1, out));
  return l;
}

Var Linear::operator()(Tape& tape, const ParamSet& params, Var x) const {
  return ad::add_row(ad::matmul(x, tape.param(params, weight)), tape.param(params, bias));
}

Var activate(Activation a, Var x) {
  switch (a) {
    case Activation::Tanh:
      return ad::tanh(x);
    case Activation::Swish:
      return ad::swish(x);
  }
  return x;
}

Mlp Mlp::create(ParamSet& params, const std::string& prefix, const std::vector<int>& widths, numerics::Rng& rng,
                Activation activation, bool zero_output) {
  if (widths.size() < 2) throw ConfigError("Mlp: need at least input and output widths");
  Mlp m;
  m.activation = activation;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    m.layers.push_back(Linear::create(params, prefix + "." + std::to_string(i), widths[i], widths[i + 1], rng,
                                      last && zero_output ? Init::Zero : Init::Scaled));
  }
  return m;
}

Var Mlp::operator()(Tape& tape, const ParamSet& params, Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](tape, params, x);
    if (i + 1 < layers.size()) x = activate(activation, x);
  }
  return x;
}

}  // namespace emoflow::nn
