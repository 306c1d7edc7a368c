#pragma once

#include <vector>

#include "emoflow/numerics/autodiff.hpp"
#include "emoflow/numerics/params.hpp"

// Images are rows of a matrix, channel-major (c, y, x) with values in [0, 1].
// Latent grids are token matrices: one row per (sample, cell), one column per
// feature, cells in row-major order.

namespace emoflow::vq {

using numerics::Matrix;
using numerics::ParamSet;
using numerics::Vector;

struct ImageShape {
  int channels = 3;
  int height = 32;
  int width = 32;

  int size() const { return channels * height * width; }
  int plane() const { return height * width; }
  bool operator==(const ImageShape&) const = default;
};

/// B x (d * cells) channel-major feature maps -> (B * cells) x d tokens.
ad::Var grid_to_tokens(ad::Var grid, int channels, int cells);
/// Inverse of grid_to_tokens.
ad::Var tokens_to_grid(ad::Var tokens, int channels, int cells);
Matrix grid_to_tokens(const Matrix& grid, int channels, int cells);
Matrix tokens_to_grid(const Matrix& tokens, int channels, int cells);

/// Broadcasts a cells x d table to every sample of a (B * cells) x d token batch.
ad::Var tile_rows(ad::Var table, int batch);

double mean_abs_error(const Matrix& a, const Matrix& b);

}  // namespace emoflow::vq
