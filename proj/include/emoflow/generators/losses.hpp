#pragma once

#include "emoflow/generators/models.hpp"

namespace emoflow::gen {

/// Mean over the batch of -(log p(z | e) + logdet), z = f^{-1}(beta, c).
/// `params` may differ from model.params (same layout) for gradient checks.
ad::Var expflow_nll(ad::Tape& tape, const ExpFlowModel& model, const ParamSet& params, const FrameBatch& batch);
/// Value form; throws NumericError if the loss is not finite.
double expflow_nll_loss(const ExpFlowModel& model, const FrameBatch& batch);

/// Mean over frames t >= 1 and coordinates of |(gt_t - gt_{t-1}) - (gen_t - gen_{t-1})|.
double consistency_loss(const Matrix& gt, const Matrix& gen);
/// Same on explicit frame pairs (rows aligned).
ad::Var consistency_pairs(ad::Var gt_prev, ad::Var gt_cur, ad::Var gen_prev, ad::Var gen_cur);

/// Consistency term for the training objective: for each pair (t-1, t) one
/// latent is drawn from the class component and pushed through the inverse
/// flow under both contexts.
ad::Var expflow_consistency(ad::Tape& tape, const ExpFlowModel& model, const ParamSet& params,
                            const FrameBatch& previous, const FrameBatch& current, const Matrix& latents);

/// Mean over the batch of -(log N(z; 0, I) + logdet).
ad::Var poseflow_nll(ad::Tape& tape, const PoseFlowModel& model, const ParamSet& params, const FrameBatch& batch);
double poseflow_loss(const PoseFlowModel& model, const FrameBatch& batch);

}  // namespace emoflow::gen
