#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "emoflow/numerics/params.hpp"

namespace emoflow::numerics {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

struct OptimizerState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  static OptimizerState fresh(const ParamSet& params, AdamConfig config = {});
  bool operator==(const OptimizerState&) const = default;
};

/// Bias-corrected adaptive-moment update. Returns new snapshots; inputs are untouched.
std::pair<ParamSet, OptimizerState> adam_step(const ParamSet& params, const ParamSet& grads,
                                              const OptimizerState& state);

/// In-place form used by the training loops.
void adam_update(ParamSet& params, const ParamSet& grads, OptimizerState& state);

}  // namespace emoflow::numerics
