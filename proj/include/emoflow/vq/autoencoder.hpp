#pragma once

#include <string>
#include <vector>

#include "emoflow/numerics/nn.hpp"
#include "emoflow/numerics/ops.hpp"
#include "emoflow/vq/image.hpp"

namespace emoflow::vq {

struct VqConfig {
  ImageShape image;
  int grid = 4;       // m = n
  int code_dim = 32;  // d
  int codes = 64;     // N
  std::vector<int> widths = {16, 32};  // encoder channels per downsampling stage (last repeats)

  int cells() const { return grid * grid; }
  /// Stride-2 stages needed to go from the image to the grid.
  int stages() const;
  void validate() const;
  bool operator==(const VqConfig&) const = default;
};

/// One convolution with its geometry.
struct ConvLayer {
  std::size_t weight = 0;
  std::size_t bias = 0;
  ad::ConvGeometry geometry;

  static ConvLayer create(ParamSet& params, const std::string& prefix, const ad::ConvGeometry& g, numerics::Rng& rng);
  ad::Var operator()(ad::Tape& tape, const ParamSet& params, ad::Var x) const;
};

/// Strided convolutional stack from images to a token grid (E_h, and E_w in VQIG).
struct ConvEncoder {
  std::vector<ConvLayer> layers;
  int out_channels = 0;
  int cells = 0;

  static ConvEncoder create(ParamSet& params, const std::string& prefix, const VqConfig& cfg, numerics::Rng& rng);
  /// Images (B x size) -> tokens (B * cells) x d.
  ad::Var operator()(ad::Tape& tape, const ParamSet& params, ad::Var images) const;
};

/// Mirrored upsampling stack from a token grid to images (D_h).
struct ConvDecoder {
  std::vector<ConvLayer> layers;  // first layer at grid resolution, then one per upsampling stage, then the output
  int in_channels = 0;
  int cells = 0;

  static ConvDecoder create(ParamSet& params, const std::string& prefix, const VqConfig& cfg, numerics::Rng& rng);
  ad::Var operator()(ad::Tape& tape, const ParamSet& params, ad::Var tokens) const;
};

struct Quantized {
  Matrix codes;              // tokens replaced by their nearest codes
  std::vector<int> indices;  // one per token row
};

/// Nearest code per token row by Euclidean distance; ties go to the lowest index.
Quantized quantize(const Matrix& tokens, const Matrix& codebook);

/// Encoder, codebook and decoder sharing one ParamSet.
struct PatchAutoencoder {
  VqConfig config;
  ParamSet params;
  ConvEncoder encoder;
  ConvDecoder decoder;
  std::size_t codebook = 0;  // N x d
  bool frozen = false;

  static PatchAutoencoder create(const VqConfig& config, std::uint64_t seed);

  const Matrix& codes() const { return params.value(codebook); }
  Matrix encode(const Matrix& images) const;
  Quantized encode_quantized(const Matrix& images) const;
  Matrix decode(const Matrix& tokens) const;
  /// Decoded nearest codes, D_h(quantize(E_h(I))).
  Matrix reconstruct(const Matrix& images) const;
};

}  // namespace emoflow::vq
