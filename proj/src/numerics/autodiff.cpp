#include "emoflow/numerics/autodiff.hpp"

#include "emoflow/errors.hpp"

namespace emoflow::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ArgumentError("Var::scalar on a non-scalar node");
  return v(0, 0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = recording();
  return push(std::move(n));
}

Var Tape::param(const numerics::ParamSet& params, std::size_t index) {
  const auto key = std::make_pair(&params, index);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return Var(this, it->second);
  Var v = frozen_.count(&params) ? constant(params.value(index)) : leaf(params.value(index));
  param_nodes_.emplace(key, v.id());
  return v;
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Pullback pullback) {
  Node n;
  n.value = std::move(value);
  if (recording()) {
    for (const Var& p : parents) {
      if (p.tape_ != this) throw ArgumentError("Tape::record: parent belongs to another tape");
      n.requires_grad = n.requires_grad || requires_grad(p);
    }
    if (n.requires_grad) n.pullback = std::move(pullback);
  }
  return push(std::move(n));
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, Pullback pullback) {
  Node n;
  n.value = std::move(value);
  if (recording()) {
    for (const Var& p : parents) {
      if (p.tape_ != this) throw ArgumentError("Tape::record: parent belongs to another tape");
      n.requires_grad = n.requires_grad || requires_grad(p);
    }
    if (n.requires_grad) n.pullback = std::move(pullback);
  }
  return push(std::move(n));
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols())
    throw NumericError("Tape::accumulate: gradient shape mismatch at node " + std::to_string(id));
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (!recording()) throw ArgumentError("Tape::backward on an inference tape");
  const Matrix& v = loss.value();
  if (v.rows() != 1 || v.cols() != 1) throw ArgumentError("Tape::backward: loss must be 1x1");
  accumulate(loss.id(), Matrix::Ones(1, 1));
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.has_grad && n.pullback) n.pullback(*this, n.grad);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id()));
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

numerics::ParamSet Tape::grads(const numerics::ParamSet& params) const {
  numerics::ParamSet out = params.zeros_like();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = param_nodes_.find({&params, i});
    if (it == param_nodes_.end()) continue;
    const Node& n = nodes_[static_cast<std::size_t>(it->second)];
    if (n.has_grad) out.set(i, n.grad);
  }
  return out;
}

}  // namespace emoflow::ad
