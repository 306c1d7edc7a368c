#pragma once

#include <memory>
#include <span>

#include "emoflow/vq/autoencoder.hpp"

namespace emoflow::vq {

struct CodebookLosses {
  ad::Var code;  // ||sg(z_h) - z_c||^2 per cell, moves the codes only
  ad::Var feat;  // ||z_h - sg(z_c)||^2 per cell, moves the encoder only
};

/// Both terms summed over features and averaged over cells (token rows).
CodebookLosses codebook_losses(ad::Var z_h, ad::Var z_c);

/// Feature map for the perceptual term.
class FeatureMap {
 public:
  virtual ~FeatureMap() = default;
  virtual ad::Var operator()(ad::Tape& tape, ad::Var images) const = 0;
};

class IdentityFeatures final : public FeatureMap {
 public:
  ad::Var operator()(ad::Tape&, ad::Var images) const override { return images; }
};

/// Two fixed random-weight convolutions with tanh, a stand-in for a
/// pretrained perceptual network. Weights are constants, never trained.
class RandomConvFeatures final : public FeatureMap {
 public:
  RandomConvFeatures(const ImageShape& shape, std::uint64_t seed, int width = 8);
  ad::Var operator()(ad::Tape& tape, ad::Var images) const override;

 private:
  ad::ConvGeometry g1_, g2_;
  Matrix w1_, b1_, w2_, b2_;
};

enum class PerceptualKind { Identity, RandomConv };
std::unique_ptr<FeatureMap> make_feature_map(PerceptualKind kind, const ImageShape& shape, std::uint64_t seed);

struct ReconLosses {
  ad::Var rec;  // mean absolute error
  ad::Var per;  // mean squared error of the feature maps
};

ReconLosses recon_losses(ad::Tape& tape, ad::Var target, ad::Var output, const FeatureMap& phi);

/// Small strided convolutional discriminator with a sigmoid output.
struct Discriminator {
  std::vector<ConvLayer> convs;
  nn::Linear head;

  static Discriminator create(ParamSet& params, const std::string& prefix, const ImageShape& shape, numerics::Rng& rng);
  /// B x 1 probabilities in (0, 1).
  ad::Var operator()(ad::Tape& tape, const ParamSet& params, ad::Var images) const;
};

struct AdversarialLosses {
  ad::Var discriminator;  // mean of log D(I) + log(1 - D(I_hat)); the discriminator maximizes it
  ad::Var generator;      // mean of -log D(I_hat), the non-saturating generator term
};

/// Throws NumericError when a probability is not strictly inside (0, 1).
AdversarialLosses adv_losses(ad::Var d_real, ad::Var d_fake);

/// Mean cross-entropy of per-cell logits against code indices.
ad::Var code_cross_entropy(ad::Var logits, std::span<const int> indices);

}  // namespace emoflow::vq
