#include "emoflow/vq/losses.hpp"

#include <cmath>

#include "emoflow/errors.hpp"

namespace emoflow::vq {

CodebookLosses codebook_losses(ad::Var z_h, ad::Var z_c) {
  if (z_h.rows() != z_c.rows() || z_h.cols() != z_c.cols()) throw ArgumentError("codebook_losses: grids not aligned");
  const double cells = static_cast<double>(z_h.rows());
  CodebookLosses l;
  l.code = ad::scale(ad::sum(ad::square(ad::sub(ad::stop_gradient(z_h), z_c))), 1.0 / cells);
  l.feat = ad::scale(ad::sum(ad::square(ad::sub(z_h, ad::stop_gradient(z_c)))), 1.0 / cells);
  return l;
}

RandomConvFeatures::RandomConvFeatures(const ImageShape& shape, std::uint64_t seed, int width) {
  numerics::Rng rng(seed);
  g1_ = ad::ConvGeometry{shape.channels, shape.height, shape.width, width, 3, 1, 1};
  g2_ = ad::ConvGeometry{width, shape.height, shape.width, width, 3, 2, 1};
  w1_ = rng.normal_matrix(shape.channels * 9, width, 1.0 / std::sqrt(shape.channels * 9.0));
  b1_ = Matrix::Zero(1, width);
  w2_ = rng.normal_matrix(width * 9, width, 1.0 / std::sqrt(width * 9.0));
  b2_ = Matrix::Zero(1, width);
}

ad::Var RandomConvFeatures::operator()(ad::Tape& tape, ad::Var images) const {
  ad::Var h = ad::tanh(ad::conv2d(images, tape.constant(w1_), tape.constant(b1_), g1_));
  return ad::tanh(ad::conv2d(h, tape.constant(w2_), tape.constant(b2_), g2_));
}

std::unique_ptr<FeatureMap> make_feature_map(PerceptualKind kind, const ImageShape& shape, std::uint64_t seed) {
  if (kind == PerceptualKind::RandomConv) return std::make_unique<RandomConvFeatures>(shape, seed);
  return std::make_unique<IdentityFeatures>();
}

ReconLosses recon_losses(ad::Tape& tape, ad::Var target, ad::Var output, const FeatureMap& phi) {
  if (target.rows() != output.rows() || target.cols() != output.cols())
    throw ArgumentError("recon_losses: image shapes differ");
  ReconLosses l;
  l.rec = ad::mean(ad::abs(ad::sub(output, target)));
  l.per = ad::mean(ad::square(ad::sub(phi(tape, output), phi(tape, target))));
  return l;
}

Discriminator Discriminator::create(ParamSet& params, const std::string& prefix, const ImageShape& shape,
                                    numerics::Rng& rng) {
  Discriminator d;
  int channels = shape.channels, size = shape.height;
  for (int k = 0, width = 8; k < 2; ++k, width *= 2) {
    d.convs.push_back(ConvLayer::create(params, prefix + ".conv" + std::to_string(k),
                                        ad::ConvGeometry{channels, size, size, width, 3, 2, 1}, rng));
    channels = width;
    size = (size + 1) / 2;
  }
  d.head = nn::Linear::create(params, prefix + ".head", channels * size * size, 1, rng);
  return d;
}

ad::Var Discriminator::operator()(ad::Tape& tape, const ParamSet& params, ad::Var images) const {
  ad::Var h = images;
  for (const auto& c : convs) h = ad::swish(c(tape, params, h));
  return ad::sigmoid(head(tape, params, h));
}

AdversarialLosses adv_losses(ad::Var d_real, ad::Var d_fake) {
  auto check = [](const Matrix& p) {
    if (!((p.array() > 0.0).all() && (p.array() < 1.0).all()))
      throw NumericError("adv_losses: discriminator output outside (0, 1)");
  };
  check(d_real.value());
  check(d_fake.value());
  AdversarialLosses l;
  ad::Var one_minus_fake = ad::add_scalar(ad::neg(d_fake), 1.0);
  l.discriminator = ad::add(ad::mean(ad::log(d_real)), ad::mean(ad::log(one_minus_fake)));
  l.generator = ad::neg(ad::mean(ad::log(d_fake)));
  return l;
}

ad::Var code_cross_entropy(ad::Var logits, std::span<const int> indices) {
  if (static_cast<Eigen::Index>(indices.size()) != logits.rows())
    throw ArgumentError("code_cross_entropy: one index per cell required");
  for (int s : indices)
    if (s < 0 || s >= logits.cols()) throw ArgumentError("code_cross_entropy: code index out of range");
  return ad::cross_entropy(logits, indices);
}

}  // namespace emoflow::vq
