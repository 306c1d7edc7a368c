#include "emoflow/vq/train.hpp"

#include <cmath>
#include <set>

#include "emoflow/errors.hpp"

namespace emoflow::vq {

AutoencoderPass autoencoder_pass(ad::Tape& tape, const PatchAutoencoder& ae, const ParamSet& params,
                                 const Matrix& images, const FeatureMap& phi, double lambda_feat,
                                 const std::vector<int>* fixed_indices) {
  AutoencoderPass p;
  ad::Var x = tape.constant(images);
  p.z_h = ae.encoder(tape, params, x);
  if (fixed_indices) {
    if (static_cast<Eigen::Index>(fixed_indices->size()) != p.z_h.rows())
      throw ArgumentError("autoencoder_pass: one fixed index per cell required");
    p.indices = *fixed_indices;
  } else {
    p.indices = quantize(p.z_h.value(), params.value(ae.codebook)).indices;
  }
  p.z_c = ad::gather_rows(tape.param(params, ae.codebook), p.indices);
  p.output = ae.decoder(tape, params, ad::straight_through(p.z_h, p.z_c));
  p.recon = recon_losses(tape, x, p.output, phi);
  p.codebook = codebook_losses(p.z_h, p.z_c);
  p.total = ad::add(ad::add(p.recon.rec, p.recon.per),
                    ad::add(p.codebook.code, ad::scale(p.codebook.feat, lambda_feat)));
  return p;
}

CodebookTrainer::CodebookTrainer(PatchAutoencoder m, const CodebookTrainConfig& c)
    : model(std::move(m)), rng(c.seed), config(c) {
  if (model.frozen) throw ConfigError("codebook training: the autoencoder is frozen");
  if (c.steps < 0 || c.batch < 1 || !(c.learning_rate > 0) || c.lambda_adv < 0 || c.lambda_feat < 0)
    throw ConfigError("codebook training: steps >= 0, batch >= 1, lr > 0 and nonnegative weights required");
  numerics::Rng disc_rng(numerics::mix_seed(c.seed, 2));
  disc = Discriminator::create(disc_params, "disc", model.config.image, disc_rng);
  optimizer = numerics::OptimizerState::fresh(model.params, numerics::AdamConfig{c.learning_rate});
  disc_optimizer = numerics::OptimizerState::fresh(disc_params, numerics::AdamConfig{c.learning_rate});
  phi_ = make_feature_map(c.perceptual, model.config.image, numerics::mix_seed(c.seed, 3));
}

void CodebookTrainer::run(const PatchCorpus& corpus, int n) {
  if (corpus.images.rows() == 0) throw DataError("codebook training: empty corpus");
  if (!(corpus.shape == model.config.image)) throw ConfigError("codebook training: corpus resolution mismatch");
  const auto pick = [&](int count) {
    Matrix x(count, corpus.images.cols());
    for (int i = 0; i < count; ++i)
      x.row(i) = corpus.images.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(corpus.images.rows()))));
    return x;
  };
  if (step == 0 && config.data_init && n > 0) {
    // Codes start on encoder outputs so every entry begins near the data.
    const int cells = model.config.cells(), codes = model.config.codes;
    const Matrix tokens = model.encode(pick((codes + cells - 1) / cells));
    Matrix& book = model.params.mutable_value(model.codebook);
    for (int k = 0; k < codes; ++k) book.row(k) = tokens.row(k) + 1e-3 * rng.normal_vector(tokens.cols()).transpose();
  }
  for (int i = 0; i < n; ++i) {
    const Matrix x = pick(config.batch);
    ad::Tape tape;
    tape.freeze(disc_params);
    AutoencoderPass p = autoencoder_pass(tape, model, model.params, x, *phi_, config.lambda_feat);
    ad::Var total = p.total;
    double adv = 0.0;
    if (config.lambda_adv > 0.0) {
      const AdversarialLosses g = adv_losses(disc(tape, disc_params, tape.constant(x)), disc(tape, disc_params, p.output));
      adv = g.discriminator.scalar();
      total = ad::add(total, ad::scale(g.generator, config.lambda_adv));
    }
    if (!std::isfinite(total.scalar())) throw TrainingError("codebook training diverged: non-finite loss", step);
    tape.backward(total);
    try {
      numerics::adam_update(model.params, tape.grads(model.params), optimizer);
      if (config.lambda_adv > 0.0) {
        ad::Tape dt;
        const AdversarialLosses d = adv_losses(disc(dt, disc_params, dt.constant(x)),
                                               disc(dt, disc_params, dt.constant(p.output.value())));
        dt.backward(ad::neg(d.discriminator));
        numerics::adam_update(disc_params, dt.grads(disc_params), disc_optimizer);
      }
    } catch (const NumericError& e) {
      throw TrainingError(std::string("codebook training diverged: ") + e.what(), step);
    }
    history.total.push_back(total.scalar());
    history.rec.push_back(p.recon.rec.scalar());
    history.per.push_back(p.recon.per.scalar());
    history.code.push_back(p.codebook.code.scalar());
    history.feat.push_back(p.codebook.feat.scalar());
    history.adv.push_back(adv);
    ++step;
  }
}

std::pair<PatchAutoencoder, CodebookHistory> train_codebook(const PatchCorpus& corpus, const VqConfig& vq,
                                                            const CodebookTrainConfig& config, std::uint64_t seed) {
  CodebookTrainConfig c = config;
  c.seed = numerics::mix_seed(seed, 1);
  CodebookTrainer tr(PatchAutoencoder::create(vq, seed), c);
  tr.run(corpus, config.steps);
  tr.model.frozen = true;
  return {std::move(tr.model), std::move(tr.history)};
}

double reconstruction_error(const PatchAutoencoder& ae, const Matrix& images) {
  return mean_abs_error(ae.reconstruct(images), images);
}

double code_usage(const PatchAutoencoder& ae, const Matrix& images) {
  std::set<int> used;
  constexpr Eigen::Index kChunk = 256;
  for (Eigen::Index s = 0; s < images.rows(); s += kChunk) {
    const auto q = ae.encode_quantized(images.middleRows(s, std::min(kChunk, images.rows() - s)));
    used.insert(q.indices.begin(), q.indices.end());
  }
  return static_cast<double>(used.size()) / ae.config.codes;
}

}  // namespace emoflow::vq
