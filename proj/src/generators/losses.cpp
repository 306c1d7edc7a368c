#include "emoflow/generators/losses.hpp"

#include <cmath>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/ops.hpp"

namespace emoflow::gen {

ad::Var expflow_nll(ad::Tape& tape, const ExpFlowModel& model, const ParamSet& params, const FrameBatch& batch) {
  if (batch.target.rows() == 0) throw ArgumentError("expflow_nll: empty batch");
  if (batch.target.cols() != model.dim()) throw ArgumentError("expflow_nll: coefficient dimension mismatch");
  ad::Var ctx = encode_context(tape, model.encoders, params, batch.raw);
  flow::LayerOutput f = model.flow.forward(tape, params, tape.constant(batch.target), ctx, batch.classes);
  ad::Var means = tape.param(params, model.means);
  if (model.config.freeze_means) means = ad::stop_gradient(means);
  ad::Var lp = latent::t_logpdf_rows(f.value, ad::gather_rows(means, batch.classes), model.config.dof);
  return ad::neg(ad::mean(ad::add(lp, f.logdet)));
}

double expflow_nll_loss(const ExpFlowModel& model, const FrameBatch& batch) {
  ad::Tape tape(ad::Tape::Mode::Inference);
  const double v = expflow_nll(tape, model, model.params, batch).scalar();
  if (!std::isfinite(v)) throw NumericError("expflow_nll_loss: non-finite loss");
  return v;
}

double consistency_loss(const Matrix& gt, const Matrix& gen) {
  if (gt.rows() != gen.rows() || gt.cols() != gen.cols()) throw ArgumentError("consistency_loss: length mismatch");
  if (gt.rows() < 2) throw ArgumentError("consistency_loss: need at least two frames");
  const Eigen::Index t = gt.rows();
  const Matrix dgt = gt.bottomRows(t - 1) - gt.topRows(t - 1);
  const Matrix dgen = gen.bottomRows(t - 1) - gen.topRows(t - 1);
  return (dgt - dgen).cwiseAbs().mean();
}

ad::Var consistency_pairs(ad::Var gt_prev, ad::Var gt_cur, ad::Var gen_prev, ad::Var gen_cur) {
  return ad::mean(ad::abs(ad::sub(ad::sub(gt_cur, gt_prev), ad::sub(gen_cur, gen_prev))));
}

ad::Var expflow_consistency(ad::Tape& tape, const ExpFlowModel& model, const ParamSet& params,
                            const FrameBatch& previous, const FrameBatch& current, const Matrix& latents) {
  if (previous.target.rows() != current.target.rows() || latents.rows() != current.target.rows())
    throw ArgumentError("expflow_consistency: pair batches disagree");
  ad::Var z = tape.constant(latents);
  ad::Var gen_prev =
      model.flow.inverse(tape, params, z, encode_context(tape, model.encoders, params, previous.raw), previous.classes);
  ad::Var gen_cur =
      model.flow.inverse(tape, params, z, encode_context(tape, model.encoders, params, current.raw), current.classes);
  return consistency_pairs(tape.constant(previous.target), tape.constant(current.target), gen_prev, gen_cur);
}

ad::Var poseflow_nll(ad::Tape& tape, const PoseFlowModel& model, const ParamSet& params, const FrameBatch& batch) {
  if (batch.target.rows() == 0) throw ArgumentError("poseflow_nll: empty batch");
  if (batch.target.cols() != model.dim()) throw ArgumentError("poseflow_nll: pose dimension mismatch");
  ad::Var ctx = encode_context(tape, model.encoders, params, batch.raw);
  flow::LayerOutput f = model.flow.forward(tape, params, tape.constant(batch.target), ctx, batch.classes);
  return ad::neg(ad::mean(ad::add(latent::gaussian_logpdf_rows(f.value), f.logdet)));
}

double poseflow_loss(const PoseFlowModel& model, const FrameBatch& batch) {
  ad::Tape tape(ad::Tape::Mode::Inference);
  const double v = poseflow_nll(tape, model, model.params, batch).scalar();
  if (!std::isfinite(v)) throw NumericError("poseflow_loss: non-finite loss");
  return v;
}

}  // namespace emoflow::gen
