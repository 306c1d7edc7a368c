#include <doctest.h>

#include <cmath>

#include "support.hpp"

using namespace emoflow;
using namespace emoflow::ad;
using numerics::Matrix;
using numerics::ParamSet;
using numerics::Rng;
using testing::check_tape;
using testing::probe;

namespace {

ParamSet random_params(std::initializer_list<std::pair<int, int>> shapes, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  ParamSet p;
  int i = 0;
  for (auto [r, c] : shapes) p.add("x" + std::to_string(i++), rng.normal_matrix(r, c, scale));
  return p;
}

void require_pass(const numerics::GradCheckReport& r) {
  INFO(r.summary());
  CHECK(r.passed());
}

}  // namespace

TEST_CASE("arithmetic gradients") {
  const ParamSet p = random_params({{3, 4}, {4, 2}, {3, 4}, {1, 4}, {3, 1}}, 1);
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) {
    Var a = t.param(q, 0), b = t.param(q, 1), c = t.param(q, 2), r = t.param(q, 3), col = t.param(q, 4);
    Var x = add(mul(a, c), sub(a, scale(c, 0.3)));
    x = mul_row(add_row(x, r), r);
    x = mul_col(add_col(x, col), col);
    x = add_scalar(neg(x), 0.7);
    return probe(matmul(x, b));
  }));
}

TEST_CASE("elementwise map gradients") {
  const ParamSet p = random_params({{4, 5}}, 2, 0.8);
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) { return probe(ad::tanh(t.param(q, 0))); }));
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) { return probe(ad::exp(t.param(q, 0))); }));
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) { return probe(sigmoid(t.param(q, 0))); }));
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) { return probe(swish(t.param(q, 0))); }));
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) { return probe(square(t.param(q, 0))); }));
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) { return probe(ad::abs(t.param(q, 0))); }));
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) { return probe(clamp(t.param(q, 0), -0.5, 0.5)); }));
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) {
    Var pos = add_scalar(square(t.param(q, 0)), 0.5);
    return add(probe(ad::log(pos)), probe(ad::log1p(pos), 5));
  }));
}

TEST_CASE("clamp passes gradient only strictly inside the interval") {
  Tape t;
  Var x = t.leaf((Matrix(1, 3) << -2.0, 0.1, 2.0).finished());
  t.backward(sum(clamp(x, -1.0, 1.0)));
  const Matrix g = t.grad(x);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 1.0);
  CHECK(g(0, 2) == 0.0);
}

TEST_CASE("reduction gradients") {
  const ParamSet p = random_params({{3, 4}}, 3);
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) {
    Var a = t.param(q, 0);
    return add(add(probe(row_sum(a)), probe(col_sum(a), 4)), add(probe(col_mean(a), 5), scale(mean(a), 3.0)));
  }));
}

TEST_CASE("softmax family gradients") {
  const ParamSet p = random_params({{3, 5}}, 4);
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) { return probe(softmax_rows(t.param(q, 0))); }));
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) { return probe(log_softmax_rows(t.param(q, 0))); }));
  const std::vector<int> labels = {0, 4, 2};
  require_pass(check_tape(p, [&](Tape& t, const ParamSet& q) { return cross_entropy(t.param(q, 0), labels); }));
}

TEST_CASE("cross entropy of uniform logits is log N") {
  Tape t;
  const std::vector<int> labels = {3, 7};
  Var logits = t.leaf(Matrix::Zero(2, 64));
  CHECK(cross_entropy(logits, labels).scalar() == doctest::Approx(std::log(64.0)).epsilon(1e-12));
}

TEST_CASE("layout gradients") {
  const ParamSet p = random_params({{3, 4}, {3, 2}, {2, 4}}, 5);
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) {
    Var a = t.param(q, 0), b = t.param(q, 1), c = t.param(q, 2);
    Var x = concat_cols({a, b, a});
    Var y = concat_rows({a, c});
    const std::vector<int> rows = {2, 0, 2, 1};
    return add(add(probe(slice_cols(x, 2, 5)), probe(slice_rows(y, 1, 3), 7)),
               add(probe(gather_rows(a, rows), 8), probe(reshape(transpose(y), 10, 2), 9)));
  }));
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) {
    std::vector<long> idx = {0, 5, -1, 11, 5, 3};
    return probe(gather(t.param(q, 0), idx, 2, 3));
  }));
}

TEST_CASE("stop gradient and straight through") {
  Tape t;
  Var cont = t.leaf((Matrix(1, 2) << 0.3, -0.2).finished());
  Var quant = t.leaf((Matrix(1, 2) << 1.0, 0.0).finished());
  Var st = straight_through(cont, quant);
  CHECK(st.value() == quant.value());
  Var w = t.constant((Matrix(1, 2) << 2.0, -3.0).finished());
  t.backward(add(sum(mul(st, w)), sum(stop_gradient(square(quant)))));
  CHECK(t.grad(cont) == w.value());
  CHECK(t.grad(quant).isZero(0));
}

TEST_CASE("triangular solve gradients") {
  Rng rng(6);
  ParamSet p;
  Matrix tri = rng.normal_matrix(4, 4, 0.3);
  tri.diagonal().array() += 2.0;
  p.add("tri", tri);
  p.add("rhs", rng.normal_matrix(4, 3));
  for (bool lower : {true, false})
    for (bool unit : {true, false}) {
      const auto report = check_tape(p, [&](Tape& t, const ParamSet& q) {
        return probe(tri_solve(t.param(q, 0), t.param(q, 1), lower, unit));
      });
      require_pass(report);
      // The unused triangle never receives gradient.
      Tape t;
      Var tv = t.param(p, 0);
      t.backward(probe(tri_solve(tv, t.param(p, 1), lower, unit)));
      const Matrix g = t.grad(tv);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          const bool used = (lower ? i > j : i < j) || (!unit && i == j);
          if (!used) CHECK(g(i, j) == 0.0);
        }
    }
}

TEST_CASE("triangular solve forward") {
  Tape t;
  Var l = t.constant((Matrix(2, 2) << 2.0, 99.0, 1.0, 4.0).finished());
  Var b = t.constant((Matrix(2, 1) << 2.0, 9.0).finished());
  const Matrix x = tri_solve(l, b, true, false).value();
  CHECK(x(0, 0) == doctest::Approx(1.0));
  CHECK(x(1, 0) == doctest::Approx(2.0));
}

TEST_CASE("conv2d gradients and forward against a direct loop") {
  ConvGeometry g{2, 5, 6, 3, 3, 2, 1};
  const ParamSet p = random_params({{2, 2 * 5 * 6}, {2 * 9, 3}, {1, 3}}, 7);
  require_pass(check_tape(p, [&](Tape& t, const ParamSet& q) {
    return probe(conv2d(t.param(q, 0), t.param(q, 1), t.param(q, 2), g));
  }));

  Tape t(Tape::Mode::Inference);
  const Matrix out = conv2d(t.constant(p.value(0)), t.constant(p.value(1)), t.constant(p.value(2)), g).value();
  const int oh = g.out_height(), ow = g.out_width();
  REQUIRE(out.cols() == 3 * oh * ow);
  for (int n = 0; n < 2; ++n)
    for (int co = 0; co < 3; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = p.value(2)(0, co);
          for (int ci = 0; ci < 2; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int y = oy * 2 - 1 + ky, x = ox * 2 - 1 + kx;
                if (y < 0 || y >= 5 || x < 0 || x >= 6) continue;
                acc += p.value(0)(n, ci * 30 + y * 6 + x) * p.value(1)((ci * 3 + ky) * 3 + kx, co);
              }
          CHECK(out(n, co * oh * ow + oy * ow + ox) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("nearest upsampling gradients") {
  const ParamSet p = random_params({{2, 2 * 3 * 2}}, 8);
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) { return probe(upsample_nearest2x(t.param(q, 0), 2, 3, 2)); }));
}

TEST_CASE("grid sample gradients away from pixel boundaries") {
  Rng rng(9);
  ParamSet p;
  p.add("image", rng.normal_matrix(2, 2 * 4 * 5));
  Matrix disp(2, 2 * 4 * 5);
  for (Eigen::Index i = 0; i < disp.size(); ++i) disp.data()[i] = rng.uniform(-1.4, 1.4);
  // Keep sampling positions off integer lattice points where bilinear weights kink.
  for (Eigen::Index i = 0; i < disp.size(); ++i) {
    double frac = disp.data()[i] - std::floor(disp.data()[i]);
    if (frac < 0.05 || frac > 0.95) disp.data()[i] += 0.3;
  }
  p.add("disp", disp);
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) {
    return probe(grid_sample(t.param(q, 0), t.param(q, 1), 2, 4, 5));
  }));
}

TEST_CASE("grid sample with zero displacement is the identity and unit shift moves one pixel") {
  Rng rng(10);
  Tape t;
  Var img = t.constant(rng.normal_matrix(1, 3 * 4 * 4));
  Var zero = t.constant(Matrix::Zero(1, 2 * 16));
  CHECK((grid_sample(img, zero, 3, 4, 4).value() - img.value()).cwiseAbs().maxCoeff() <= 1e-12);
  Matrix shift = Matrix::Zero(1, 32);
  shift.leftCols(16).setOnes();
  const Matrix out = grid_sample(img, t.constant(shift), 3, 4, 4).value();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        const int src = std::min(x + 1, 3);
        CHECK(out(0, c * 16 + y * 4 + x) == doctest::Approx(img.value()(0, c * 16 + y * 4 + src)));
      }
}

TEST_CASE("multi-head attention gradients and normalization") {
  const ParamSet p = random_params({{2 * 3, 8}, {2 * 4, 8}, {2 * 4, 8}}, 11);
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) {
    return probe(multihead_attention(t.param(q, 0), t.param(q, 1), t.param(q, 2), 2, 2));
  }));
  for (const Matrix& w : attention_weights(p.value(0), p.value(1), 2, 2)) {
    CHECK(w.rows() == 3);
    CHECK(w.cols() == 4);
    CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("single-token attention returns the value") {
  Rng rng(12);
  Tape t;
  Var q = t.constant(rng.normal_matrix(1, 8));
  Var k = t.constant(rng.normal_matrix(1, 8));
  Var v = t.constant(rng.normal_matrix(1, 8));
  CHECK((multihead_attention(q, k, v, 1, 4).value() - v.value()).norm() < 1e-14);
}

TEST_CASE("instance norm gradients and statistics") {
  const ParamSet p = random_params({{2 * 5, 3}}, 13);
  require_pass(check_tape(p, [](Tape& t, const ParamSet& q) { return probe(instance_norm(t.param(q, 0), 5, 1e-5)); }));
  Tape t;
  const Matrix y = instance_norm(t.constant(p.value(0)), 5, 0.0).value();
  for (int b = 0; b < 2; ++b) {
    const Matrix block = y.middleRows(b * 5, 5);
    CHECK(block.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
    const Matrix centered = block.rowwise() - block.colwise().mean();
    CHECK(((centered.array().square().colwise().sum() / 5.0) - 1.0).abs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("param nodes are cached per tape and frozen sets are constants") {
  ParamSet p;
  p.add("w", Matrix::Constant(1, 1, 2.0));
  Tape t;
  CHECK(t.param(p, 0).id() == t.param(p, 0).id());
  Tape f;
  f.freeze(p);
  Var w = f.param(p, 0);
  CHECK_FALSE(f.requires_grad(w));
}

TEST_CASE("inference tape computes the same values") {
  const ParamSet p = random_params({{3, 4}, {4, 2}}, 14);
  Tape r, i(Tape::Mode::Inference);
  auto f = [](Tape& t, const ParamSet& q) { return ad::tanh(matmul(t.param(q, 0), t.param(q, 1))); };
  CHECK(f(r, p).value() == f(i, p).value());
}
