#pragma once

#include <span>
#include <vector>

#include "emoflow/numerics/autodiff.hpp"

// Differentiable operations on Tape nodes. Batched tensors are stored with one
// sample per row; images and feature maps are flattened channel-major
// (c, y, x) within a row.

namespace emoflow::ad {

// Arithmetic.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);   // a + broadcast 1xN row
Var mul_row(Var a, Var row);   // a * broadcast 1xN row
Var add_col(Var a, Var col);   // a + broadcast Mx1 column
Var mul_col(Var a, Var col);   // a * broadcast Mx1 column
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

// Elementwise maps.
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var log1p(Var a);
Var sigmoid(Var a);
Var swish(Var a);
Var square(Var a);
Var abs(Var a);
/// Pass-through gradient inside (lo, hi), zero outside.
Var clamp(Var a, double lo, double hi);

// Reductions.
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);   // Mx1
Var col_sum(Var a);   // 1xN
Var col_mean(Var a);  // 1xN

// Row-wise softmax family.
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const int> labels);

// Layout.
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var gather_rows(Var a, std::span<const int> rows);
/// out.data()[j] = a.data()[index[j]] (column-major), or 0 where index[j] < 0.
Var gather(Var a, std::vector<long> index, Eigen::Index rows, Eigen::Index cols);
Var transpose(Var a);
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);

// Gradient routing.
Var stop_gradient(Var a);
/// Forward value is exactly `quantized`; the gradient is copied to `continuous`.
Var straight_through(Var continuous, Var quantized);

/// X = T^{-1} B using only the selected triangle of T.
Var tri_solve(Var tri, Var rhs, bool lower, bool unit_diagonal);

// Convolutional feature maps.
struct ConvGeometry {
  int in_channels = 1;
  int height = 1;
  int width = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  int out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
};

/// weight: (in_channels*k*k) x out_channels, bias: 1 x out_channels.
Var conv2d(Var input, Var weight, Var bias, const ConvGeometry& g);
Var upsample_nearest2x(Var input, int channels, int height, int width);
/// Bilinear resampling of `image` at (y + dy, x + dx) with border clamping.
/// `displacement` rows hold channel 0 = dx, channel 1 = dy, in pixels.
Var grid_sample(Var image, Var displacement, int channels, int height, int width);

/// Multi-head scaled dot-product attention. q: (B*Tq) x d, k/v: (B*Tk) x d.
/// Returns concatenated head outputs, (B*Tq) x d.
Var multihead_attention(Var q, Var k, Var v, int batch, int heads);
/// The softmax weights multihead_attention would use, one matrix per (b, h).
std::vector<Matrix> attention_weights(const Matrix& q, const Matrix& k, int batch, int heads);

/// Per-sample, per-channel standardization over `group_rows` consecutive rows.
Var instance_norm(Var x, int group_rows, double eps);

}  // namespace emoflow::ad
