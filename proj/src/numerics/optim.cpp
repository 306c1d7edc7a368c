#include "emoflow/numerics/optim.hpp"

#include <cmath>

#include "emoflow/errors.hpp"

namespace emoflow::numerics {

OptimizerState OptimizerState::fresh(const ParamSet& params, AdamConfig config) {
  OptimizerState s;
  s.config = config;
  for (const auto& e : params) {
    s.first_moment.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
    s.second_moment.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
  }
  return s;
}

void adam_update(ParamSet& params, const ParamSet& grads, OptimizerState& state) {
  if (!params.same_layout(grads)) throw ConfigError("adam_step: gradient layout does not match parameters");
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw ConfigError("adam_step: optimizer state does not match parameters");
  if (state.step < 0) throw ConfigError("adam_step: negative step counter");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].rows() != params.value(i).rows() || state.first_moment[i].cols() != params.value(i).cols())
      throw ConfigError("adam_step: moment shape mismatch for '" + params.name(i) + "'");
    if (!grads.value(i).allFinite()) throw NumericError("adam_step: non-finite gradient for '" + params.name(i) + "'");
  }

  const auto& c = state.config;
  const std::int64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    const Matrix& g = grads.value(i);
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    Matrix& p = params.mutable_value(i);
    p.array() -= c.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
  }
  state.step = t;
}

std::pair<ParamSet, OptimizerState> adam_step(const ParamSet& params, const ParamSet& grads,
                                              const OptimizerState& state) {
  ParamSet p = params;
  OptimizerState s = state;
  adam_update(p, grads, s);
  return {std::move(p), std::move(s)};
}

}  // namespace emoflow::numerics
