#include "emoflow/vqig/train.hpp"

#include <cmath>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/ops.hpp"
#include "emoflow/vq/train.hpp"

namespace emoflow::vqig {

CodeLosses vqig_losses(ad::Var logits, std::span<const int> s_gt, ad::Var fused, ad::Var z_c_gt) {
  if (fused.rows() != z_c_gt.rows() || fused.cols() != z_c_gt.cols())
    throw ArgumentError("vqig_losses: feature grids differ");
  CodeLosses l;
  l.code = vq::code_cross_entropy(logits, s_gt);
  l.feat = ad::scale(ad::sum(ad::square(ad::sub(fused, z_c_gt))), 1.0 / static_cast<double>(fused.rows()));
  return l;
}

namespace {
Matrix take_rows(const Matrix& m, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}
}  // namespace

VqigObjective vqig_objective(ad::Tape& tape, const VqigModel& m, const ParamSet& params,
                             const vq::PatchAutoencoder& ae, const vq::PairCorpus& pairs, std::span<const int> rows,
                             const vq::FeatureMap& phi, double lambda_feat, double image_weight) {
  const Matrix targets = take_rows(pairs.targets, rows);
  VqigObjective o;
  o.forward = vqig_forward(tape, m, params, ae, take_rows(pairs.sources, rows), take_rows(pairs.beta, rows),
                           take_rows(pairs.rho, rows));
  const vq::Quantized gt = ae.encode_quantized(targets);
  o.codes = vqig_losses(o.forward.logits, gt.indices, o.forward.fused, tape.constant(gt.codes));
  o.decoded = ae.decoder(tape, ae.params, o.forward.fused);
  o.image = vq::recon_losses(tape, tape.constant(targets), o.decoded, phi);
  o.total = ad::add(o.codes.code, ad::scale(o.codes.feat, lambda_feat));
  if (image_weight > 0.0) o.total = ad::add(o.total, ad::scale(ad::add(o.image.rec, o.image.per), image_weight));
  return o;
}

VqigTrainer::VqigTrainer(VqigModel m, const vq::PatchAutoencoder& autoencoder, const VqigTrainConfig& c)
    : model(std::move(m)), ae(&autoencoder), rng(c.seed), config(c) {
  if (!autoencoder.frozen) throw ConfigError("vqig training: the autoencoder must be trained and frozen first");
  if (c.steps < 0 || c.batch < 1 || !(c.learning_rate > 0) || c.lambda_feat < 0 || c.image_weight < 0 ||
      c.warmup < 0 || c.lambda_adv < 0)
    throw ConfigError("vqig training: invalid configuration");
  numerics::Rng disc_rng(numerics::mix_seed(c.seed, 2));
  disc = vq::Discriminator::create(disc_params, "disc", model.vq.image, disc_rng);
  optimizer = numerics::OptimizerState::fresh(model.params, numerics::AdamConfig{c.learning_rate});
  disc_optimizer = numerics::OptimizerState::fresh(disc_params, numerics::AdamConfig{c.learning_rate});
  phi_ = vq::make_feature_map(c.perceptual, model.vq.image, numerics::mix_seed(c.seed, 3));
}

void VqigTrainer::run(const vq::PairCorpus& pairs, int n) {
  if (pairs.size() == 0) throw DataError("vqig training: no pairs");
  if (!(pairs.shape == model.vq.image)) throw ConfigError("vqig training: pair resolution mismatch");
  for (int i = 0; i < n; ++i) {
    const long step = model.trained_steps;
    std::vector<int> rows(static_cast<std::size_t>(config.batch));
    for (auto& r : rows) r = static_cast<int>(rng.index(static_cast<std::size_t>(pairs.size())));
    const bool image_on = step >= config.warmup;
    ad::Tape tape;
    tape.freeze(disc_params);
    VqigObjective o = vqig_objective(tape, model, model.params, *ae, pairs, rows, *phi_, config.lambda_feat,
                                     image_on ? config.image_weight : 0.0);
    ad::Var total = o.total;
    double adv = 0.0;
    const bool adv_on = image_on && config.lambda_adv > 0.0;
    Matrix real;
    if (adv_on) {
      real = take_rows(pairs.targets, rows);
      const auto g = vq::adv_losses(disc(tape, disc_params, tape.constant(real)), disc(tape, disc_params, o.decoded));
      adv = g.discriminator.scalar();
      total = ad::add(total, ad::scale(g.generator, config.lambda_adv * config.image_weight));
    }
    if (!std::isfinite(total.scalar())) throw TrainingError("vqig training diverged: non-finite loss", step);
    tape.backward(total);
    try {
      numerics::adam_update(model.params, tape.grads(model.params), optimizer);
      if (adv_on) {
        ad::Tape dt;
        const auto d = vq::adv_losses(disc(dt, disc_params, dt.constant(real)),
                                      disc(dt, disc_params, dt.constant(o.decoded.value())));
        dt.backward(ad::neg(d.discriminator));
        numerics::adam_update(disc_params, dt.grads(disc_params), disc_optimizer);
      }
    } catch (const NumericError& e) {
      throw TrainingError(std::string("vqig training diverged: ") + e.what(), step);
    }
    history.total.push_back(total.scalar());
    history.code.push_back(o.codes.code.scalar());
    history.feat.push_back(o.codes.feat.scalar());
    history.rec.push_back(o.image.rec.scalar());
    history.per.push_back(o.image.per.scalar());
    history.adv.push_back(adv);
    ++model.trained_steps;
  }
}

std::pair<VqigModel, VqigHistory> train_vqig(const vq::PairCorpus& pairs, const vq::PatchAutoencoder& ae,
                                             const VqigConfig& model_config, const VqigTrainConfig& config,
                                             std::uint64_t seed) {
  VqigTrainConfig c = config;
  c.seed = numerics::mix_seed(seed, 1);
  VqigTrainer tr(VqigModel::create(model_config, ae, seed), ae, c);
  tr.run(pairs, config.steps);
  return {std::move(tr.model), std::move(tr.history)};
}

VqigEvaluation evaluate_vqig(const VqigModel& m, const vq::PatchAutoencoder& ae, const vq::PairCorpus& pairs) {
  if (pairs.size() == 0) throw DataError("evaluate_vqig: no pairs");
  VqigEvaluation e;
  long hits = 0, cells = 0;
  double err = 0.0;
  constexpr int kChunk = 64;
  for (int s = 0; s < pairs.size(); s += kChunk) {
    const int n = std::min(kChunk, pairs.size() - s);
    ad::Tape tape(ad::Tape::Mode::Inference);
    const VqigForward f = vqig_forward(tape, m, m.params, ae, pairs.sources.middleRows(s, n),
                                       pairs.beta.middleRows(s, n), pairs.rho.middleRows(s, n));
    const std::vector<int> pred = argmax_rows(f.logits.value());
    const std::vector<int> gt = ae.encode_quantized(pairs.targets.middleRows(s, n)).indices;
    for (std::size_t k = 0; k < gt.size(); ++k) hits += pred[k] == gt[k];
    cells += static_cast<long>(gt.size());
    err += (ae.decode(lookup_codes(ae.codes(), pred)) - pairs.targets.middleRows(s, n)).cwiseAbs().sum();
  }
  e.code_accuracy = static_cast<double>(hits) / static_cast<double>(cells);
  e.reconstruction = err / static_cast<double>(pairs.targets.size());
  e.baseline_reconstruction = vq::reconstruction_error(ae, pairs.targets);
  return e;
}

}  // namespace emoflow::vqig
