#include "emoflow/flow/layers.hpp"

#include <cmath>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/ops.hpp"

namespace emoflow::flow {

namespace {

Matrix strict_mask(int dim, bool lower) {
  Matrix m = Matrix::Zero(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      if (lower ? i > j : i < j) m(i, j) = 1.0;
  return m;
}

Matrix permutation_matrix(const std::vector<int>& perm) {
  const int d = static_cast<int>(perm.size());
  Matrix p = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) p(i, perm[static_cast<std::size_t>(i)]) = 1.0;
  return p;
}

Var broadcast_scalar(Tape& tape, Var s, Eigen::Index rows) {
  return ad::matmul(tape.constant(Matrix::Ones(rows, 1)), s);
}

}  // namespace

// --- ActNorm ----------------------------------------------------------------

ActNorm ActNorm::create(ParamSet& params, const std::string& prefix, int classes, int dim) {
  if (classes < 1 || dim < 1) throw ConfigError("ActNorm: class count and dimension must be positive");
  ActNorm a;
  a.classes = classes;
  a.dim = dim;
  a.mean = params.add(prefix + ".mean", Matrix::Zero(classes, dim));
  a.log_scale = params.add(prefix + ".log_scale", Matrix::Zero(classes, dim));
  return a;
}

namespace {
void check_classes(std::span<const int> cls, int classes, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(cls.size()) != rows) throw ArgumentError("ActNorm: one class id per row required");
  for (int c : cls)
    if (c < 0 || c >= classes) throw ArgumentError("ActNorm: unknown class id " + std::to_string(c));
}
}  // namespace

LayerOutput ActNorm::forward(Tape& tape, const ParamSet& params, Var x, std::span<const int> cls) const {
  check_classes(cls, classes, x.rows());
  Var mu = ad::gather_rows(tape.param(params, mean), cls);
  Var ls = ad::gather_rows(tape.param(params, log_scale), cls);
  return {ad::mul(ad::sub(x, mu), ad::exp(ad::neg(ls))), ad::neg(ad::row_sum(ls))};
}

Var ActNorm::inverse(Tape& tape, const ParamSet& params, Var h, std::span<const int> cls) const {
  check_classes(cls, classes, h.rows());
  Var mu = ad::gather_rows(tape.param(params, mean), cls);
  Var ls = ad::gather_rows(tape.param(params, log_scale), cls);
  return ad::add(ad::mul(h, ad::exp(ls)), mu);
}

// --- InvLinear --------------------------------------------------------------

InvLinear InvLinear::from_matrix(ParamSet& params, const std::string& prefix, const Matrix& w) {
  if (w.rows() != w.cols() || w.rows() < 1) throw ConfigError("InvLinear: square matrix required");
  const int d = static_cast<int>(w.rows());
  Eigen::PartialPivLU<Matrix> lu(w);
  const Matrix& packed = lu.matrixLU();
  // lu: P_eigen W = L U, so W = P_eigen^T L U.
  const Matrix p = lu.permutationP().transpose().toDenseMatrix().cast<double>();
  InvLinear l;
  l.dim = d;
  l.permutation.resize(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    Eigen::Index col = 0;
    p.row(i).maxCoeff(&col);
    l.permutation[static_cast<std::size_t>(i)] = static_cast<int>(col);
  }
  Matrix lower = packed.triangularView<Eigen::StrictlyLower>();
  Matrix upper = packed.triangularView<Eigen::StrictlyUpper>();
  Matrix log_diag(1, d);
  l.sign.resize(d);
  for (int i = 0; i < d; ++i) {
    const double u = packed(i, i);
    if (u == 0.0 || !std::isfinite(u)) throw ConfigError("InvLinear: matrix is singular");
    l.sign[i] = u > 0 ? 1.0 : -1.0;
    log_diag(0, i) = std::log(std::abs(u));
  }
  l.lower = params.add(prefix + ".lower", std::move(lower));
  l.upper = params.add(prefix + ".upper", std::move(upper));
  l.log_diag = params.add(prefix + ".log_diag", std::move(log_diag));
  return l;
}

InvLinear InvLinear::create(ParamSet& params, const std::string& prefix, int dim, numerics::Rng& rng, Init init) {
  if (dim < 1) throw ConfigError("InvLinear: dimension must be positive");
  if (init == Init::Identity) return from_matrix(params, prefix, Matrix::Identity(dim, dim));
  Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(dim, dim));
  const Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
  return from_matrix(params, prefix, q);
}

namespace {
struct Factors {
  Var l;  // unit lower
  Var u;  // upper with diagonal
};

Factors build_factors(Tape& tape, const ParamSet& params, const InvLinear& lin) {
  const int d = lin.dim;
  Var eye = tape.constant(Matrix::Identity(d, d));
  Var l = ad::add(ad::mul(tape.param(params, lin.lower), tape.constant(strict_mask(d, true))), eye);
  Var diag = ad::mul(tape.constant(lin.sign.transpose()), ad::exp(tape.param(params, lin.log_diag)));
  Var u = ad::add(ad::mul(tape.param(params, lin.upper), tape.constant(strict_mask(d, false))), ad::mul_row(eye, diag));
  return {l, u};
}
}  // namespace

LayerOutput InvLinear::forward(Tape& tape, const ParamSet& params, Var x) const {
  if (x.cols() != dim) throw ArgumentError("InvLinear: dimension mismatch");
  const Factors f = build_factors(tape, params, *this);
  Var w = ad::matmul(tape.constant(permutation_matrix(permutation)), ad::matmul(f.l, f.u));
  Var y = ad::matmul(x, ad::transpose(w));
  return {y, broadcast_scalar(tape, ad::sum(tape.param(params, log_diag)), x.rows())};
}

Var InvLinear::inverse(Tape& tape, const ParamSet& params, Var y) const {
  if (y.cols() != dim) throw ArgumentError("InvLinear: dimension mismatch");
  const Factors f = build_factors(tape, params, *this);
  Var z = ad::matmul(tape.constant(permutation_matrix(permutation).transpose()), ad::transpose(y));
  z = ad::tri_solve(f.l, z, true, true);
  z = ad::tri_solve(f.u, z, false, false);
  return ad::transpose(z);
}

Matrix InvLinear::dense(const ParamSet& params) const {
  Tape tape(Tape::Mode::Inference);
  const Factors f = build_factors(tape, params, *this);
  return permutation_matrix(permutation) * f.l.value() * f.u.value();
}

double InvLinear::logdet(const ParamSet& params) const { return params.value(log_diag).sum(); }

// --- Coupling ---------------------------------------------------------------

Coupling Coupling::create(ParamSet& params, const std::string& prefix, int dim, int context_dim, int hidden,
                          bool swap, numerics::Rng& rng) {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("Coupling: dimension must be even and at least 2");
  if (context_dim < 0 || hidden < 1) throw ConfigError("Coupling: invalid widths");
  Coupling c;
  c.dim = dim;
  c.context_dim = context_dim;
  c.swap = swap;
  c.conditioner = nn::Mlp::create(params, prefix + ".net", {dim / 2 + context_dim, hidden, hidden, dim}, rng,
                                  nn::Activation::Tanh, true);
  return c;
}

Coupling::ShiftScale Coupling::conditioner_out(Tape& tape, const ParamSet& params, Var kept, Var ctx) const {
  if (ctx.cols() != context_dim || ctx.rows() != kept.rows()) throw ArgumentError("Coupling: context shape mismatch");
  Var in = context_dim > 0 ? ad::concat_cols({kept, ctx}) : kept;
  Var out = conditioner(tape, params, in);
  return {ad::slice_cols(out, 0, half()), ad::clamp(ad::slice_cols(out, half(), half()), -kScaleClamp, kScaleClamp)};
}

LayerOutput Coupling::forward(Tape& tape, const ParamSet& params, Var x, Var ctx) const {
  if (x.cols() != dim) throw ArgumentError("Coupling: dimension mismatch");
  Var kept = ad::slice_cols(x, kept_start(), half());
  const ShiftScale ss = conditioner_out(tape, params, kept, ctx);
  Var moved = ad::mul(ad::add(ad::slice_cols(x, moved_start(), half()), ss.shift), ad::exp(ss.raw));
  Var out = swap ? ad::concat_cols({moved, kept}) : ad::concat_cols({kept, moved});
  return {out, ad::row_sum(ss.raw)};
}

Var Coupling::inverse(Tape& tape, const ParamSet& params, Var y, Var ctx) const {
  if (y.cols() != dim) throw ArgumentError("Coupling: dimension mismatch");
  Var kept = ad::slice_cols(y, kept_start(), half());
  const ShiftScale ss = conditioner_out(tape, params, kept, ctx);
  Var moved = ad::sub(ad::mul(ad::slice_cols(y, moved_start(), half()), ad::exp(ad::neg(ss.raw))), ss.shift);
  return swap ? ad::concat_cols({moved, kept}) : ad::concat_cols({kept, moved});
}

}  // namespace emoflow::flow
