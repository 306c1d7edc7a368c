#include "emoflow/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "emoflow/errors.hpp"

namespace emoflow::ad {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ArgumentError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()) + ")");
}

template <class F, class D>
Var unary(Var a, F f, D dfdx) {
  Tape& t = a.tape();
  Matrix v = a.value().unaryExpr(f);
  const int ia = a.id();
  return t.record(std::move(v), {a}, [ia, dfdx](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.cwiseProduct(tp.value(ia).unaryExpr(dfdx)));
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ArgumentError("matmul: inner dimension mismatch");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, -g);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ArgumentError("add_row: row shape mismatch");
  const int ia = a.id(), ir = row.id();
  Matrix v = a.value().rowwise() + row.value().row(0);
  return a.tape().record(std::move(v), {a, row}, [ia, ir](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ir)) tp.accumulate(ir, g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ArgumentError("mul_row: row shape mismatch");
  const int ia = a.id(), ir = row.id();
  Matrix v = a.value().array().rowwise() * row.value().row(0).array();
  return a.tape().record(std::move(v), {a, row}, [ia, ir](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) {
      Matrix ga = g.array().rowwise() * tp.value(ir).row(0).array();
      tp.accumulate(ia, ga);
    }
    if (tp.requires_grad(ir)) tp.accumulate(ir, g.cwiseProduct(tp.value(ia)).colwise().sum());
  });
}

Var add_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw ArgumentError("add_col: column shape mismatch");
  const int ia = a.id(), ic = col.id();
  Matrix v = a.value().colwise() + col.value().col(0);
  return a.tape().record(std::move(v), {a, col}, [ia, ic](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ic)) tp.accumulate(ic, g.rowwise().sum());
  });
}

Var mul_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw ArgumentError("mul_col: column shape mismatch");
  const int ia = a.id(), ic = col.id();
  Matrix v = a.value().array().colwise() * col.value().col(0).array();
  return a.tape().record(std::move(v), {a, col}, [ia, ic](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) {
      Matrix ga = g.array().colwise() * tp.value(ic).col(0).array();
      tp.accumulate(ia, ga);
    }
    if (tp.requires_grad(ic)) tp.accumulate(ic, g.cwiseProduct(tp.value(ia)).rowwise().sum());
  });
}

Var scale(Var a, double s) {
  const int ia = a.id();
  return a.tape().record(a.value() * s, {a}, [ia, s](Tape& tp, const Matrix& g) { tp.accumulate(ia, g * s); });
}

Var add_scalar(Var a, double s) {
  const int ia = a.id();
  Matrix v = a.value().array() + s;
  return a.tape().record(std::move(v), {a}, [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var tanh(Var a) {
  Matrix y = a.value().array().tanh();
  const int ia = a.id();
  Matrix dy = (1.0 - y.array().square()).matrix();
  return a.tape().record(std::move(y), {a}, [ia, dy = std::move(dy)](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.cwiseProduct(dy));
  });
}

Var exp(Var a) {
  Tape& t = a.tape();
  const int ia = a.id();
  Matrix v = a.value().array().exp();
  return t.record(std::move(v), {a}, [ia](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.cwiseProduct(tp.value(ia).array().exp().matrix()));
  });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var log1p(Var a) {
  return unary(a, [](double x) { return std::log1p(x); }, [](double x) { return 1.0 / (1.0 + x); });
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_scalar, [](double x) {
    const double s = sigmoid_scalar(x);
    return s * (1.0 - s);
  });
}

Var swish(Var a) {
  return unary(a, [](double x) { return x * sigmoid_scalar(x); }, [](double x) {
    const double s = sigmoid_scalar(x);
    return s + x * s * (1.0 - s);
  });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var abs(Var a) {
  return unary(a, [](double x) { return std::abs(x); },
               [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var clamp(Var a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
  const int ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return a.tape().record(Matrix::Constant(1, 1, a.value().sum()), {a}, [ia, r, c](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  const int ia = a.id();
  const auto c = a.cols();
  return a.tape().record(a.value().rowwise().sum(), {a}, [ia, c](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.col(0).replicate(1, c));
  });
}

Var col_sum(Var a) {
  const int ia = a.id();
  const auto r = a.rows();
  return a.tape().record(a.value().colwise().sum(), {a}, [ia, r](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.row(0).replicate(r, 1));
  });
}

Var col_mean(Var a) { return scale(col_sum(a), 1.0 / static_cast<double>(a.rows())); }

namespace {
Matrix softmax_rows_value(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    Eigen::RowVectorXd e = (x.row(i).array() - m).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}
}  // namespace

Var softmax_rows(Var a) {
  Matrix y = softmax_rows_value(a.value());
  const int ia = a.id();
  Matrix saved = y;
  return a.tape().record(std::move(y), {a}, [ia, saved = std::move(saved)](Tape& tp, const Matrix& g) {
    Eigen::VectorXd dot = g.cwiseProduct(saved).rowwise().sum();
    Matrix ga = saved.array() * (g.colwise() - dot).array();
    tp.accumulate(ia, ga);
  });
}

Var log_softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  const int ia = a.id();
  Tape& t = a.tape();
  Matrix sm = out.array().exp();
  return t.record(std::move(out), {a}, [ia, sm](Tape& tp, const Matrix& g) {
    Eigen::VectorXd gs = g.rowwise().sum();
    Matrix ga = g - (sm.array().colwise() * gs.array()).matrix();
    tp.accumulate(ia, ga);
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Matrix& x = logits.value();
  if (static_cast<Eigen::Index>(labels.size()) != x.rows())
    throw ArgumentError("cross_entropy: label count must equal row count");
  Matrix sm = softmax_rows_value(x);
  double total = 0.0;
  std::vector<int> lab(labels.begin(), labels.end());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int k = lab[static_cast<std::size_t>(i)];
    if (k < 0 || k >= x.cols()) throw ArgumentError("cross_entropy: label out of range");
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    total += lse - x(i, k);
  }
  const double n = static_cast<double>(x.rows());
  const int il = logits.id();
  return logits.tape().record(Matrix::Constant(1, 1, total / n), {logits},
                              [il, sm, lab, n](Tape& tp, const Matrix& g) {
                                Matrix ga = sm;
                                for (std::size_t i = 0; i < lab.size(); ++i)
                                  ga(static_cast<Eigen::Index>(i), lab[i]) -= 1.0;
                                tp.accumulate(il, ga * (g(0, 0) / n));
                              });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ArgumentError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.cols();
  }
  return parts.front().tape().record(std::move(v), parts, [spans](Tape& tp, const Matrix& g) {
    for (const auto& [id, o] : spans)
      if (tp.requires_grad(id)) tp.accumulate(id, g.middleCols(o, tp.value(id).cols()));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ArgumentError("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.rows();
  }
  return parts.front().tape().record(std::move(v), parts, [spans](Tape& tp, const Matrix& g) {
    for (const auto& [id, o] : spans)
      if (tp.requires_grad(id)) tp.accumulate(id, g.middleRows(o, tp.value(id).rows()));
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ArgumentError("slice_cols: out of range");
  const int ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return a.tape().record(a.value().middleCols(start, count), {a},
                         [ia, r, c, start, count](Tape& tp, const Matrix& g) {
                           Matrix ga = Matrix::Zero(r, c);
                           ga.middleCols(start, count) = g;
                           tp.accumulate(ia, ga);
                         });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ArgumentError("slice_rows: out of range");
  const int ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return a.tape().record(a.value().middleRows(start, count), {a},
                         [ia, r, c, start, count](Tape& tp, const Matrix& g) {
                           Matrix ga = Matrix::Zero(r, c);
                           ga.middleRows(start, count) = g;
                           tp.accumulate(ia, ga);
                         });
}

Var gather_rows(Var a, std::span<const int> rows) {
  const Matrix& x = a.value();
  Matrix v(static_cast<Eigen::Index>(rows.size()), x.cols());
  std::vector<int> idx(rows.begin(), rows.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.rows()) throw ArgumentError("gather_rows: row index out of range");
    v.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  }
  const int ia = a.id();
  const auto r = x.rows(), c = x.cols();
  return a.tape().record(std::move(v), {a}, [ia, idx, r, c](Tape& tp, const Matrix& g) {
    Matrix ga = Matrix::Zero(r, c);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    tp.accumulate(ia, ga);
  });
}

Var gather(Var a, std::vector<long> index, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(index.size()) != rows * cols) throw ArgumentError("gather: index size mismatch");
  const Matrix& x = a.value();
  Matrix v(rows, cols);
  const long n = static_cast<long>(x.size());
  for (std::size_t j = 0; j < index.size(); ++j) {
    const long k = index[j];
    if (k >= n) throw ArgumentError("gather: index out of range");
    v.data()[j] = k < 0 ? 0.0 : x.data()[k];
  }
  const int ia = a.id();
  const auto r = x.rows(), c = x.cols();
  return a.tape().record(std::move(v), {a}, [ia, index = std::move(index), r, c](Tape& tp, const Matrix& g) {
    Matrix ga = Matrix::Zero(r, c);
    for (std::size_t j = 0; j < index.size(); ++j)
      if (index[j] >= 0) ga.data()[index[j]] += g.data()[j];
    tp.accumulate(ia, ga);
  });
}

Var transpose(Var a) {
  const int ia = a.id();
  return a.tape().record(a.value().transpose(), {a},
                         [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g.transpose()); });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw ArgumentError("reshape: size mismatch");
  const int ia = a.id();
  const auto r = a.rows(), c = a.cols();
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return a.tape().record(std::move(v), {a}, [ia, r, c](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Eigen::Map<const Matrix>(g.data(), r, c));
  });
}

Var stop_gradient(Var a) { return a.tape().constant(a.value()); }

Var straight_through(Var continuous, Var quantized) {
  require_same_shape(continuous, quantized, "straight_through");
  const int ic = continuous.id();
  return continuous.tape().record(quantized.value(), {continuous},
                                  [ic](Tape& tp, const Matrix& g) { tp.accumulate(ic, g); });
}

namespace {
Matrix tri_solve_value(const Matrix& t, const Matrix& b, bool lower, bool unit, bool transposed) {
  Matrix x = b;
  if (!transposed) {
    if (lower && unit) t.triangularView<Eigen::UnitLower>().solveInPlace(x);
    else if (lower) t.triangularView<Eigen::Lower>().solveInPlace(x);
    else if (unit) t.triangularView<Eigen::UnitUpper>().solveInPlace(x);
    else t.triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
  }
  if (lower && unit) t.triangularView<Eigen::UnitLower>().transpose().solveInPlace(x);
  else if (lower) t.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
  else if (unit) t.triangularView<Eigen::UnitUpper>().transpose().solveInPlace(x);
  else t.triangularView<Eigen::Upper>().transpose().solveInPlace(x);
  return x;
}
}  // namespace

Var tri_solve(Var tri, Var rhs, bool lower, bool unit_diagonal) {
  if (tri.rows() != tri.cols() || tri.rows() != rhs.rows()) throw ArgumentError("tri_solve: shape mismatch");
  Matrix x = tri_solve_value(tri.value(), rhs.value(), lower, unit_diagonal, false);
  const int it = tri.id(), ib = rhs.id();
  Matrix saved = x;
  return tri.tape().record(std::move(x), {tri, rhs},
                           [it, ib, saved = std::move(saved), lower, unit_diagonal](Tape& tp, const Matrix& g) {
                             Matrix gb = tri_solve_value(tp.value(it), g, lower, unit_diagonal, true);
                             if (tp.requires_grad(ib)) tp.accumulate(ib, gb);
                             if (tp.requires_grad(it)) {
                               Matrix gt = -gb * saved.transpose();
                               const auto n = gt.rows();
                               for (Eigen::Index j = 0; j < n; ++j)
                                 for (Eigen::Index i = 0; i < n; ++i) {
                                   const bool in_triangle = lower ? (i >= j) : (i <= j);
                                   if (!in_triangle || (unit_diagonal && i == j)) gt(i, j) = 0.0;
                                 }
                               tp.accumulate(it, gt);
                             }
                           });
}

// --- convolution ----------------------------------------------------------

namespace {

// Rows are (sample, output pixel) pairs; columns are (channel, ky, kx).
Matrix im2col(const Matrix& x, const ConvGeometry& g) {
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  const Eigen::Index batch = x.rows();
  const Eigen::Index pix = static_cast<Eigen::Index>(ho) * wo;
  Matrix cols = Matrix::Zero(batch * pix, static_cast<Eigen::Index>(g.in_channels) * k * k);
  Eigen::VectorXd row;
  for (Eigen::Index b = 0; b < batch; ++b) {
    row = x.row(b).transpose();
    for (int c = 0; c < g.in_channels; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const Eigen::Index col = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride + ky - g.padding;
            if (iy < 0 || iy >= g.height) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * g.stride + kx - g.padding;
              if (ix < 0 || ix >= g.width) continue;
              cols(b * pix + oy * wo + ox, col) = row[(static_cast<Eigen::Index>(c) * g.height + iy) * g.width + ix];
            }
          }
        }
  }
  return cols;
}

Matrix col2im(const Matrix& cols, Eigen::Index batch, const ConvGeometry& g) {
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  const Eigen::Index pix = static_cast<Eigen::Index>(ho) * wo;
  Matrix x = Matrix::Zero(batch, static_cast<Eigen::Index>(g.in_channels) * g.height * g.width);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int c = 0; c < g.in_channels; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const Eigen::Index col = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride + ky - g.padding;
            if (iy < 0 || iy >= g.height) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * g.stride + kx - g.padding;
              if (ix < 0 || ix >= g.width) continue;
              x(b, (static_cast<Eigen::Index>(c) * g.height + iy) * g.width + ix) += cols(b * pix + oy * wo + ox, col);
            }
          }
        }
  return x;
}

}  // namespace

Var conv2d(Var input, Var weight, Var bias, const ConvGeometry& g) {
  const Eigen::Index in_size = static_cast<Eigen::Index>(g.in_channels) * g.height * g.width;
  if (input.cols() != in_size) throw ArgumentError("conv2d: input size does not match geometry");
  if (weight.rows() != static_cast<Eigen::Index>(g.in_channels) * g.kernel * g.kernel || weight.cols() != g.out_channels)
    throw ArgumentError("conv2d: weight shape does not match geometry");
  if (bias.rows() != 1 || bias.cols() != g.out_channels) throw ArgumentError("conv2d: bias shape mismatch");

  const Eigen::Index batch = input.rows();
  const Eigen::Index pix = static_cast<Eigen::Index>(g.out_height()) * g.out_width();
  Matrix cols = im2col(input.value(), g);
  Matrix out = cols * weight.value();
  out.rowwise() += bias.value().row(0);

  Matrix v(batch, pix * g.out_channels);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int co = 0; co < g.out_channels; ++co) v.block(b, co * pix, 1, pix) = out.block(b * pix, co, pix, 1).transpose();

  const int ii = input.id(), iw = weight.id(), ib = bias.id();
  return input.tape().record(std::move(v), {input, weight, bias},
                             [ii, iw, ib, g, batch, pix](Tape& tp, const Matrix& gout) {
                               Matrix go(batch * pix, g.out_channels);
                               for (Eigen::Index b = 0; b < batch; ++b)
                                 for (int co = 0; co < g.out_channels; ++co)
                                   go.block(b * pix, co, pix, 1) = gout.block(b, co * pix, 1, pix).transpose();
                               if (tp.requires_grad(ib)) tp.accumulate(ib, go.colwise().sum());
                               const bool need_w = tp.requires_grad(iw), need_x = tp.requires_grad(ii);
                               if (need_w) tp.accumulate(iw, im2col(tp.value(ii), g).transpose() * go);
                               if (need_x) tp.accumulate(ii, col2im(go * tp.value(iw).transpose(), batch, g));
                             });
}

Var upsample_nearest2x(Var input, int channels, int height, int width) {
  const Eigen::Index in_size = static_cast<Eigen::Index>(channels) * height * width;
  if (input.cols() != in_size) throw ArgumentError("upsample_nearest2x: size mismatch");
  const int h2 = 2 * height, w2 = 2 * width;
  const Eigen::Index batch = input.rows();
  std::vector<long> src(static_cast<std::size_t>(channels) * h2 * w2);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < h2; ++y)
      for (int x = 0; x < w2; ++x)
        src[(static_cast<std::size_t>(c) * h2 + y) * w2 + x] = (static_cast<long>(c) * height + y / 2) * width + x / 2;
  const Matrix& xin = input.value();
  Matrix v(batch, static_cast<Eigen::Index>(src.size()));
  for (std::size_t j = 0; j < src.size(); ++j) v.col(static_cast<Eigen::Index>(j)) = xin.col(src[j]);
  const int ii = input.id();
  return input.tape().record(std::move(v), {input}, [ii, src, batch, in_size](Tape& tp, const Matrix& g) {
    Matrix gi = Matrix::Zero(batch, in_size);
    for (std::size_t j = 0; j < src.size(); ++j) gi.col(src[j]) += g.col(static_cast<Eigen::Index>(j));
    tp.accumulate(ii, gi);
  });
}

Var grid_sample(Var image, Var displacement, int channels, int height, int width) {
  const Eigen::Index plane = static_cast<Eigen::Index>(height) * width;
  if (image.cols() != channels * plane) throw ArgumentError("grid_sample: image size mismatch");
  if (displacement.cols() != 2 * plane || displacement.rows() != image.rows())
    throw ArgumentError("grid_sample: displacement shape mismatch");
  const Matrix& img = image.value();
  const Matrix& disp = displacement.value();
  const Eigen::Index batch = img.rows();
  Matrix v(batch, img.cols());
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
        const double sx = std::clamp(x + disp(b, p), 0.0, static_cast<double>(width - 1));
        const double sy = std::clamp(y + disp(b, plane + p), 0.0, static_cast<double>(height - 1));
        const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
        const double wx = sx - x0, wy = sy - y0;
        for (int c = 0; c < channels; ++c) {
          const Eigen::Index base = c * plane;
          const double i00 = img(b, base + y0 * width + x0), i01 = img(b, base + y0 * width + x1);
          const double i10 = img(b, base + y1 * width + x0), i11 = img(b, base + y1 * width + x1);
          v(b, base + p) = (1 - wy) * ((1 - wx) * i00 + wx * i01) + wy * ((1 - wx) * i10 + wx * i11);
        }
      }
  const int ii = image.id(), id = displacement.id();
  return image.tape().record(
      std::move(v), {image, displacement}, [ii, id, channels, height, width, plane, batch](Tape& tp, const Matrix& g) {
        const Matrix& img = tp.value(ii);
        const Matrix& disp = tp.value(id);
        const bool need_img = tp.requires_grad(ii), need_disp = tp.requires_grad(id);
        Matrix gi = need_img ? Matrix::Zero(batch, img.cols()) : Matrix();
        Matrix gd = need_disp ? Matrix::Zero(batch, disp.cols()) : Matrix();
        for (Eigen::Index b = 0; b < batch; ++b)
          for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
              const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
              const double rx = x + disp(b, p), ry = y + disp(b, plane + p);
              const double sx = std::clamp(rx, 0.0, static_cast<double>(width - 1));
              const double sy = std::clamp(ry, 0.0, static_cast<double>(height - 1));
              const bool free_x = rx > 0.0 && rx < width - 1, free_y = ry > 0.0 && ry < height - 1;
              const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
              const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
              const double wx = sx - x0, wy = sy - y0;
              for (int c = 0; c < channels; ++c) {
                const Eigen::Index base = c * plane;
                const double go = g(b, base + p);
                if (need_img) {
                  gi(b, base + y0 * width + x0) += go * (1 - wy) * (1 - wx);
                  gi(b, base + y0 * width + x1) += go * (1 - wy) * wx;
                  gi(b, base + y1 * width + x0) += go * wy * (1 - wx);
                  gi(b, base + y1 * width + x1) += go * wy * wx;
                }
                if (need_disp) {
                  const double i00 = img(b, base + y0 * width + x0), i01 = img(b, base + y0 * width + x1);
                  const double i10 = img(b, base + y1 * width + x0), i11 = img(b, base + y1 * width + x1);
                  if (free_x) gd(b, p) += go * ((1 - wy) * (i01 - i00) + wy * (i11 - i10));
                  if (free_y) gd(b, plane + p) += go * ((1 - wx) * (i10 - i00) + wx * (i11 - i01));
                }
              }
            }
        if (need_img) tp.accumulate(ii, gi);
        if (need_disp) tp.accumulate(id, gd);
      });
}

// --- attention --------------------------------------------------------------

std::vector<Matrix> attention_weights(const Matrix& q, const Matrix& k, int batch, int heads) {
  const Eigen::Index d = q.cols();
  const Eigen::Index dh = d / heads;
  const Eigen::Index tq = q.rows() / batch, tk = k.rows() / batch;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(batch) * heads);
  for (int b = 0; b < batch; ++b)
    for (int h = 0; h < heads; ++h) {
      Matrix s = q.block(b * tq, h * dh, tq, dh) * k.block(b * tk, h * dh, tk, dh).transpose() * inv;
      out.push_back(softmax_rows_value(s));
    }
  return out;
}

Var multihead_attention(Var q, Var k, Var v, int batch, int heads) {
  const Eigen::Index d = q.cols();
  if (k.cols() != d || v.cols() != d || d % heads != 0) throw ArgumentError("multihead_attention: width mismatch");
  if (q.rows() % batch != 0 || k.rows() % batch != 0 || v.rows() != k.rows())
    throw ArgumentError("multihead_attention: row count mismatch");
  const Eigen::Index dh = d / heads;
  const Eigen::Index tq = q.rows() / batch, tk = k.rows() / batch;
  std::vector<Matrix> weights = attention_weights(q.value(), k.value(), batch, heads);
  Matrix out(q.rows(), d);
  for (int b = 0; b < batch; ++b)
    for (int h = 0; h < heads; ++h)
      out.block(b * tq, h * dh, tq, dh) =
          weights[static_cast<std::size_t>(b * heads + h)] * v.value().block(b * tk, h * dh, tk, dh);
  const int iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape().record(
      std::move(out), {q, k, v}, [iq, ik, iv, batch, heads, dh, tq, tk, weights](Tape& tp, const Matrix& g) {
        const Matrix& Q = tp.value(iq);
        const Matrix& K = tp.value(ik);
        const Matrix& V = tp.value(iv);
        const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
        Matrix gq = Matrix::Zero(Q.rows(), Q.cols());
        Matrix gk = Matrix::Zero(K.rows(), K.cols());
        Matrix gv = Matrix::Zero(V.rows(), V.cols());
        for (int b = 0; b < batch; ++b)
          for (int h = 0; h < heads; ++h) {
            const Matrix& A = weights[static_cast<std::size_t>(b * heads + h)];
            const Matrix go = g.block(b * tq, h * dh, tq, dh);
            gv.block(b * tk, h * dh, tk, dh) += A.transpose() * go;
            Matrix ga = go * V.block(b * tk, h * dh, tk, dh).transpose();
            Eigen::VectorXd dot = ga.cwiseProduct(A).rowwise().sum();
            Matrix gs = A.array() * (ga.colwise() - dot).array();
            gq.block(b * tq, h * dh, tq, dh) += gs * K.block(b * tk, h * dh, tk, dh) * inv;
            gk.block(b * tk, h * dh, tk, dh) += gs.transpose() * Q.block(b * tq, h * dh, tq, dh) * inv;
          }
        tp.accumulate(iq, gq);
        tp.accumulate(ik, gk);
        tp.accumulate(iv, gv);
      });
}

Var instance_norm(Var x, int group_rows, double eps) {
  const Matrix& xv = x.value();
  if (group_rows <= 0 || xv.rows() % group_rows != 0) throw ArgumentError("instance_norm: bad group size");
  const Eigen::Index groups = xv.rows() / group_rows;
  Matrix xhat(xv.rows(), xv.cols());
  Matrix inv_std(groups, xv.cols());
  for (Eigen::Index gi = 0; gi < groups; ++gi) {
    auto blk = xv.middleRows(gi * group_rows, group_rows);
    Eigen::RowVectorXd mu = blk.colwise().mean();
    Matrix centered = blk.rowwise() - mu;
    Eigen::RowVectorXd var = centered.array().square().colwise().mean();
    Eigen::RowVectorXd is = (var.array() + eps).rsqrt();
    inv_std.row(gi) = is;
    xhat.middleRows(gi * group_rows, group_rows) = centered.array().rowwise() * is.array();
  }
  const int ix = x.id();
  Matrix xh_copy = xhat;
  return x.tape().record(std::move(xhat), {x}, [ix, group_rows, groups, inv_std, xh_copy](Tape& tp, const Matrix& g) {
    Matrix gx(g.rows(), g.cols());
    for (Eigen::Index gi = 0; gi < groups; ++gi) {
      auto gb = g.middleRows(gi * group_rows, group_rows);
      auto xh = xh_copy.middleRows(gi * group_rows, group_rows);
      Eigen::RowVectorXd mg = gb.colwise().mean();
      Eigen::RowVectorXd mgx = gb.cwiseProduct(xh).colwise().mean();
      Matrix t = (gb.rowwise() - mg) - Matrix(xh.array().rowwise() * mgx.array());
      gx.middleRows(gi * group_rows, group_rows) = t.array().rowwise() * inv_std.row(gi).array();
    }
    tp.accumulate(ix, gx);
  });
}

}  // namespace emoflow::ad
