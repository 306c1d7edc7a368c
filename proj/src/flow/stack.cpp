#include "emoflow/flow/stack.hpp"

#include "emoflow/errors.hpp"
#include "emoflow/numerics/ops.hpp"

namespace emoflow::flow {

FlowStack FlowStack::create(ParamSet& params, const std::string& prefix, const FlowConfig& config,
                            numerics::Rng& rng) {
  if (config.steps < 1) throw ConfigError("FlowStack: at least one step required");
  if (config.dim < 2 || config.dim % 2 != 0) throw ConfigError("FlowStack: dimension must be even");
  FlowStack s;
  s.config_ = config;
  for (int k = 0; k < config.steps; ++k) {
    const std::string p = prefix + ".step" + std::to_string(k);
    FlowStep step;
    step.actnorm = ActNorm::create(params, p + ".actnorm", config.classes, config.dim);
    step.linear = InvLinear::create(params, p + ".linear", config.dim, rng, config.linear_init);
    step.coupling =
        Coupling::create(params, p + ".coupling", config.dim, config.context_dim, config.hidden, k % 2 == 1, rng);
    s.steps_.push_back(std::move(step));
  }
  return s;
}

int FlowStack::resolve_last(int last) const {
  const int k = static_cast<int>(steps_.size());
  return last < 0 ? k : last;
}

void FlowStack::check_inputs(Var x, Var ctx, std::span<const int> cls) const {
  if (x.cols() != config_.dim) throw ArgumentError("FlowStack: data dimension mismatch");
  if (ctx.cols() != config_.context_dim || ctx.rows() != x.rows())
    throw ArgumentError("FlowStack: context shape mismatch");
  if (static_cast<Eigen::Index>(cls.size()) != x.rows()) throw ArgumentError("FlowStack: one class per row");
}

LayerOutput FlowStack::forward(Tape& tape, const ParamSet& params, Var x, Var ctx, std::span<const int> cls,
                               int first, int last) const {
  check_inputs(x, ctx, cls);
  last = resolve_last(last);
  if (first < 0 || first > last || last > static_cast<int>(steps_.size()))
    throw ArgumentError("FlowStack: bad step range");
  Var logdet = tape.constant(Matrix::Zero(x.rows(), 1));
  for (int k = first; k < last; ++k) {
    const FlowStep& s = steps_[static_cast<std::size_t>(k)];
    LayerOutput a = s.actnorm.forward(tape, params, x, cls);
    LayerOutput b = s.linear.forward(tape, params, a.value);
    LayerOutput c = s.coupling.forward(tape, params, b.value, ctx);
    logdet = ad::add(logdet, ad::add(a.logdet, ad::add(b.logdet, c.logdet)));
    x = c.value;
  }
  return {x, logdet};
}

Var FlowStack::inverse(Tape& tape, const ParamSet& params, Var z, Var ctx, std::span<const int> cls, int first,
                       int last) const {
  check_inputs(z, ctx, cls);
  last = resolve_last(last);
  if (first < 0 || first > last || last > static_cast<int>(steps_.size()))
    throw ArgumentError("FlowStack: bad step range");
  for (int k = last - 1; k >= first; --k) {
    const FlowStep& s = steps_[static_cast<std::size_t>(k)];
    z = s.coupling.inverse(tape, params, z, ctx);
    z = s.linear.inverse(tape, params, z);
    z = s.actnorm.inverse(tape, params, z, cls);
  }
  return z;
}

FlowStack::Point FlowStack::forward(const ParamSet& params, const Vector& x, const Vector& ctx, int cls) const {
  auto [z, ld] = forward_batch(params, x.transpose(), ctx.transpose(), std::span<const int>(&cls, 1));
  return {z.row(0).transpose(), ld[0]};
}

Vector FlowStack::inverse(const ParamSet& params, const Vector& z, const Vector& ctx, int cls) const {
  return inverse_batch(params, z.transpose(), ctx.transpose(), std::span<const int>(&cls, 1)).row(0).transpose();
}

std::pair<Matrix, Vector> FlowStack::forward_batch(const ParamSet& params, const Matrix& x, const Matrix& ctx,
                                                   std::span<const int> cls) const {
  Tape tape(Tape::Mode::Inference);
  LayerOutput out = forward(tape, params, tape.constant(x), tape.constant(ctx), cls);
  return {out.value.value(), out.logdet.value().col(0)};
}

Matrix FlowStack::inverse_batch(const ParamSet& params, const Matrix& z, const Matrix& ctx,
                                std::span<const int> cls) const {
  Tape tape(Tape::Mode::Inference);
  return inverse(tape, params, tape.constant(z), tape.constant(ctx), cls).value();
}

}  // namespace emoflow::flow
