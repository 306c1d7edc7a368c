#pragma once

#include <memory>

#include "emoflow/numerics/optim.hpp"
#include "emoflow/vq/losses.hpp"
#include "emoflow/vq/render.hpp"

namespace emoflow::vq {

struct CodebookTrainConfig {
  int steps = 2000;
  int batch = 16;
  double learning_rate = 2e-3;
  double lambda_adv = 0.0;
  double lambda_feat = 0.25;
  PerceptualKind perceptual = PerceptualKind::Identity;
  bool data_init = true;  // seed the codebook with encoder outputs before the first step
  std::uint64_t seed = 0;
};

struct CodebookHistory {
  std::vector<double> total, rec, per, code, feat, adv;
};

/// One forward pass of the autoencoder training objective. With
/// `fixed_indices` the quantizer's choice is held constant, which makes the
/// objective smooth in every parameter for finite-difference checks.
struct AutoencoderPass {
  ad::Var z_h, z_c, output;
  std::vector<int> indices;
  ReconLosses recon;
  CodebookLosses codebook;
  ad::Var total;  // rec + per + code + lambda_feat * feat (adversarial term added by the trainer)
};

AutoencoderPass autoencoder_pass(ad::Tape& tape, const PatchAutoencoder& ae, const ParamSet& params,
                                 const Matrix& images, const FeatureMap& phi, double lambda_feat,
                                 const std::vector<int>* fixed_indices = nullptr);

/// Resumable codebook training; holds every piece of state a checkpoint needs.
class CodebookTrainer {
 public:
  CodebookTrainer(PatchAutoencoder model, const CodebookTrainConfig& config);
  void run(const PatchCorpus& corpus, int n);

  PatchAutoencoder model;
  ParamSet disc_params;
  Discriminator disc;
  numerics::OptimizerState optimizer;
  numerics::OptimizerState disc_optimizer;
  numerics::Rng rng;
  CodebookTrainConfig config;
  CodebookHistory history;
  long step = 0;

 private:
  std::unique_ptr<FeatureMap> phi_;
};

/// Trains from `seed` and marks the result frozen.
std::pair<PatchAutoencoder, CodebookHistory> train_codebook(const PatchCorpus& corpus, const VqConfig& vq,
                                                            const CodebookTrainConfig& config, std::uint64_t seed);

/// Mean absolute error of D_h(quantize(E_h(I))) against I.
double reconstruction_error(const PatchAutoencoder& ae, const Matrix& images);
/// Fraction of codes selected at least once over the images.
double code_usage(const PatchAutoencoder& ae, const Matrix& images);

}  // namespace emoflow::vq
