#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <set>
#include <utility>

#include <Eigen/Dense>

#include "emoflow/numerics/params.hpp"

namespace emoflow::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  int id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order; backward() walks them in reverse and calls each node's pullback.
///
/// In Inference mode nothing requires a gradient, so no pullbacks are stored
/// and evaluation costs only the forward arithmetic.
class Tape {
 public:
  enum class Mode { Record, Inference };
  using Pullback = std::function<void(Tape&, const Matrix& upstream)>;

  explicit Tape(Mode mode = Mode::Record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return mode_ == Mode::Record; }

  Var constant(Matrix value);
  /// Differentiable input whose gradient can be read back with grad().
  Var leaf(Matrix value);
  /// Node bound to entry `index` of `params`; created once per tape.
  Var param(const numerics::ParamSet& params, std::size_t index);
  /// All later param() calls on this set yield constants.
  void freeze(const numerics::ParamSet& params) { frozen_.insert(&params); }

  void backward(Var loss);

  /// Gradient accumulated at `v` (zeros if nothing reached it).
  Matrix grad(Var v) const;
  /// Gradients of every entry of `params` (zeros for unused entries).
  numerics::ParamSet grads(const numerics::ParamSet& params) const;

  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id())).requires_grad; }
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }
  const Matrix& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Appends a computed node. `pullback` runs only if some parent requires a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Pullback pullback);
  Var record(Matrix value, const std::vector<Var>& parents, Pullback pullback);

  void accumulate(int id, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Pullback pullback;
  };
  Var push(Node node);

  Mode mode_;
  std::deque<Node> nodes_;
  std::map<std::pair<const numerics::ParamSet*, std::size_t>, int> param_nodes_;
  std::set<const numerics::ParamSet*> frozen_;
};

}  // namespace emoflow::ad
