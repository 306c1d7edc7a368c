#pragma once

#include <span>

#include "emoflow/context/context.hpp"
#include "emoflow/flow/stack.hpp"
#include "emoflow/latent/student_t.hpp"

namespace emoflow::gen {

using numerics::Matrix;
using numerics::ParamSet;
using numerics::Vector;

struct ExpFlowConfig {
  int dim = 64;
  int classes = 4;
  int steps = 8;
  int hidden = 128;
  double dof = latent::kDefaultDof;
  bool freeze_means = false;
  double dropout = 0.25;
  double lambda_con = 0.1;
  flow::InvLinear::Init linear_init = flow::InvLinear::Init::Rotation;
  context::EncoderConfig encoders;  // coeff_dim and classes are overwritten from the fields above
};

/// Context-conditioned flow over expression coefficients with a Student's-t
/// mixture latent (one component per emotion class).
struct ExpFlowModel {
  ExpFlowConfig config;
  ParamSet params;
  context::ContextEncoders encoders;
  flow::FlowStack flow;
  std::size_t means = 0;  // C x D SMM means inside params
  long trained_steps = 0;

  static ExpFlowModel create(const ExpFlowConfig& config, std::uint64_t seed);
  latent::Smm smm() const { return {params.value(means), config.dof}; }
  int dim() const { return config.dim; }
  int classes() const { return config.classes; }
};

struct PoseFlowConfig {
  int dim = 6;
  int steps = 4;
  int hidden = 64;
  double dropout = 0.0;
  flow::InvLinear::Init linear_init = flow::InvLinear::Init::Rotation;
  context::EncoderConfig encoders = [] {
    context::EncoderConfig c;
    c.history_kind = context::EncoderKind::Identity;
    return c;
  }();  // pose_dim overwritten; history kept raw
};

/// Audio- and history-conditioned flow over pose with a standard Gaussian latent.
struct PoseFlowModel {
  PoseFlowConfig config;
  ParamSet params;
  context::ContextEncoders encoders;
  flow::FlowStack flow;
  long trained_steps = 0;

  static PoseFlowModel create(const PoseFlowConfig& config, std::uint64_t seed);
  int dim() const { return config.dim; }
};

/// Frames with their unencoded contexts, one row per frame.
struct FrameBatch {
  Matrix target;  // B x D (expression or pose)
  context::RawContext raw;
  std::vector<int> classes;
};

/// Every frame of a dataset with its raw context, for fast batch selection.
struct FrameTable {
  Matrix target;
  context::RawContext raw;
  std::vector<int> classes;
  std::vector<int> previous;  // row of frame t-1 of the same clip, -1 at t = 0
  std::vector<int> sequence;
  std::vector<int> frame;

  static FrameTable build(const context::Dataset& ds, const context::EncoderConfig& config, context::Variant variant);
  FrameBatch select(std::span<const int> rows) const;
  int size() const { return static_cast<int>(target.rows()); }
};

/// Contexts encoded through the model's encoders (history scaled by raw.keep).
ad::Var encode_context(ad::Tape& tape, const context::ContextEncoders& enc, const ParamSet& params,
                       const context::RawContext& raw);

}  // namespace emoflow::gen
