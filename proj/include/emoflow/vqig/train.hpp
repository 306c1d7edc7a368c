#pragma once

#include <memory>

#include "emoflow/numerics/optim.hpp"
#include "emoflow/vq/losses.hpp"
#include "emoflow/vq/render.hpp"
#include "emoflow/vqig/model.hpp"

namespace emoflow::vqig {

struct CodeLosses {
  ad::Var code;  // mean cross-entropy of the logits against s
  ad::Var feat;  // ||z_hat_f - z_c||^2 per cell, averaged
};

CodeLosses vqig_losses(ad::Var logits, std::span<const int> s_gt, ad::Var fused, ad::Var z_c_gt);

struct VqigTrainConfig {
  int steps = 2000;
  int batch = 16;
  double learning_rate = 1e-3;
  double lambda_feat = 0.25;
  double image_weight = 1.0;  // weight of the image-level group after warm-up
  int warmup = 200;           // steps with the image-level group switched off
  double lambda_adv = 0.0;
  vq::PerceptualKind perceptual = vq::PerceptualKind::Identity;
  std::uint64_t seed = 0;
};

struct VqigHistory {
  std::vector<double> total, code, feat, rec, per, adv;
};

/// Value and pieces of the training objective for one batch of pairs.
struct VqigObjective {
  VqigForward forward;
  CodeLosses codes;
  vq::ReconLosses image;
  ad::Var decoded;  // D_h(z_hat_f)
  ad::Var total;    // code + lambda_feat * feat + image_weight * (rec + per), adversarial term excluded
};

VqigObjective vqig_objective(ad::Tape& tape, const VqigModel& m, const ParamSet& params,
                             const vq::PatchAutoencoder& ae, const vq::PairCorpus& pairs, std::span<const int> rows,
                             const vq::FeatureMap& phi, double lambda_feat, double image_weight);

class VqigTrainer {
 public:
  VqigTrainer(VqigModel model, const vq::PatchAutoencoder& ae, const VqigTrainConfig& config);
  void run(const vq::PairCorpus& pairs, int n);

  VqigModel model;
  const vq::PatchAutoencoder* ae;
  ParamSet disc_params;
  vq::Discriminator disc;
  numerics::OptimizerState optimizer;
  numerics::OptimizerState disc_optimizer;
  numerics::Rng rng;
  VqigTrainConfig config;
  VqigHistory history;

 private:
  std::unique_ptr<vq::FeatureMap> phi_;
};

/// Requires a frozen autoencoder; the autoencoder is never modified.
std::pair<VqigModel, VqigHistory> train_vqig(const vq::PairCorpus& pairs, const vq::PatchAutoencoder& ae,
                                             const VqigConfig& model_config, const VqigTrainConfig& config,
                                             std::uint64_t seed);

struct VqigEvaluation {
  double code_accuracy = 0.0;          // predicted vs ground-truth target indices
  double reconstruction = 0.0;         // mean abs error of decoded predicted codes against targets
  double baseline_reconstruction = 0.0;  // the frozen autoencoder's own error on the targets
};

VqigEvaluation evaluate_vqig(const VqigModel& m, const vq::PatchAutoencoder& ae, const vq::PairCorpus& pairs);

}  // namespace emoflow::vqig
