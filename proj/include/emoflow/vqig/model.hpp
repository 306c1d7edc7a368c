#pragma once

#include <span>
#include <vector>

#include "emoflow/numerics/nn.hpp"
#include "emoflow/vq/autoencoder.hpp"

namespace emoflow::vqig {

using numerics::Matrix;
using numerics::ParamSet;
using numerics::Vector;

struct VqigConfig {
  int coeff_dim = 64;
  int pose_dim = 6;
  int motion_dim = 16;      // length of sigma
  int mapper_hidden = 64;
  int warp_grid = 4;        // low-resolution displacement grid side
  double max_displacement = 0.25;  // fraction of the image side
  int fuse_hidden = 64;
  int heads = 4;
  int layers = 2;           // transformer depth
  int ff_hidden = 64;

  void validate(const vq::VqConfig& vq) const;
  bool operator==(const VqigConfig&) const = default;
};

struct AttentionBlock {
  nn::Linear q, k, v, o;
  static AttentionBlock create(ParamSet& params, const std::string& prefix, int dim, numerics::Rng& rng);
  /// query + o(MHA(q(query), k(memory), v(memory))).
  ad::Var operator()(ad::Tape& tape, const ParamSet& params, ad::Var query, ad::Var memory, int batch,
                     int heads) const;
};

struct TransformerLayer {
  AttentionBlock attention;
  nn::Mlp feed_forward;
};

/// Trainable VQIG parts; the frozen E_h, codebook and D_h stay in the
/// PatchAutoencoder passed alongside.
struct VqigModel {
  VqigConfig config;
  vq::VqConfig vq;
  ParamSet params;
  nn::Mlp mapper;                 // (beta, rho) -> sigma, zero output layer
  nn::Linear warp;                // sigma -> 2 x g x g displacements, zero-initialized
  vq::ConvEncoder warped_encoder; // E_w, starts as a copy of E_h
  nn::Mlp fuse;                   // concat(z_w, z_c) -> z
  AttentionBlock cross;           // queries from z, keys/values from z_c
  nn::Linear adain;               // sigma -> per-channel scale and shift, zero-initialized
  std::size_t positions = 0;      // cells x d positional embeddings
  std::vector<TransformerLayer> transformer;
  nn::Linear head;                // d -> N logits
  long trained_steps = 0;

  static VqigModel create(const VqigConfig& config, const vq::PatchAutoencoder& ae, std::uint64_t seed);
};

/// sigma = Phi(beta, rho), B x motion_dim.
ad::Var map_motion(ad::Tape& tape, const VqigModel& m, const ParamSet& params, ad::Var beta, ad::Var rho);

struct Warped {
  ad::Var displacement;  // B x 2HW (dx plane then dy plane), pixels
  ad::Var image;
};

/// Low-resolution displacement from sigma, bounded by tanh, nearest-upsampled
/// to the image and applied by clamped bilinear sampling.
Warped warp_image(ad::Tape& tape, const VqigModel& m, const ParamSet& params, ad::Var images, ad::Var sigma);

/// Standardizes each sample's channels over its `cells` token rows, then
/// applies per-sample scale and shift (B x d each).
ad::Var adain(ad::Var tokens, ad::Var scale, ad::Var shift, int cells, double eps = 1e-5);

/// Fuse network, cross-attention over z_c, and the sigma-driven AdaIN branch.
ad::Var fuse_and_attend(ad::Tape& tape, const VqigModel& m, const ParamSet& params, ad::Var z_w, ad::Var z_c,
                        ad::Var sigma);

/// Per-cell code logits, (B * cells) x N.
ad::Var predict_codes(ad::Tape& tape, const VqigModel& m, const ParamSet& params, ad::Var fused);

/// Row-wise argmax, lowest index on ties.
std::vector<int> argmax_rows(const Matrix& logits);
Matrix lookup_codes(const Matrix& codebook, std::span<const int> indices);

struct VqigForward {
  ad::Var sigma;
  Warped warped;
  ad::Var z_w;
  ad::Var z_c;    // quantized source features (constant)
  ad::Var fused;  // z_hat_f
  ad::Var logits;
};

/// Full generator pass for a batch of sources and target coefficients. The
/// autoencoder's parameters are frozen on `tape`.
VqigForward vqig_forward(ad::Tape& tape, const VqigModel& m, const ParamSet& params, const vq::PatchAutoencoder& ae,
                         const Matrix& sources, const Matrix& beta, const Matrix& rho);

/// Frames for a coefficient sequence (T x coeff_dim, T x pose_dim) from one
/// source image. Deterministic; z_c of the source is computed once.
Matrix animate(const VqigModel& m, const vq::PatchAutoencoder& ae, const Vector& source, const Matrix& beta,
               const Matrix& rho, std::vector<int>* codes = nullptr);

}  // namespace emoflow::vqig
