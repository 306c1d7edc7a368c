#include <doctest.h>

#include <cmath>

#include "emoflow/errors.hpp"
#include "emoflow/flow/stack.hpp"
#include "emoflow/latent/student_t.hpp"
#include "support.hpp"

using namespace emoflow;
using namespace emoflow::flow;
using numerics::Rng;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

/// Jacobian of x -> z by central differences.
Matrix fd_jacobian(const FlowStack& s, const ParamSet& p, const Vector& x, const Vector& c, int cls, double h) {
  const Eigen::Index d = x.size();
  Matrix j(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    Vector xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    j.col(k) = (s.forward(p, xp, c, cls).z - s.forward(p, xm, c, cls).z) / (2.0 * h);
  }
  return j;
}

struct Built {
  ParamSet params;
  FlowStack stack;
};

Built build(FlowConfig cfg, std::uint64_t seed, double jitter_scale) {
  Built b;
  Rng rng(seed);
  b.stack = FlowStack::create(b.params, "flow", cfg, rng);
  if (jitter_scale > 0) testing::jitter(b.params, jitter_scale, seed + 1000);
  return b;
}

}  // namespace

TEST_CASE("actnorm identity, hand example and roundtrip") {
  ParamSet p;
  const ActNorm a = ActNorm::create(p, "an", 2, 2);
  Tape t;
  const std::vector<int> cls = {1};
  LayerOutput id = a.forward(t, p, t.constant(row({3, 5})), cls);
  CHECK(id.value.value() == row({3, 5}));
  CHECK(id.logdet.scalar() == 0.0);

  p.mutable_value(a.mean).row(1) << 1, 1;
  p.mutable_value(a.log_scale).row(1).setConstant(std::log(2.0));
  Tape t2;
  LayerOutput out = a.forward(t2, p, t2.constant(row({3, 5})), cls);
  CHECK((out.value.value() - row({1, 2})).norm() < 1e-14);
  CHECK(out.logdet.scalar() == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-14));
  CHECK(out.logdet.scalar() == doctest::Approx(-1.3863).epsilon(1e-4));

  testing::jitter(p, 0.5, 3);
  Rng rng(4);
  const Matrix x = rng.normal_matrix(5, 2);
  const std::vector<int> many = {0, 1, 1, 0, 1};
  Tape t3;
  Var h = a.forward(t3, p, t3.constant(x), many).value;
  CHECK((a.inverse(t3, p, h, many).value() - x).cwiseAbs().maxCoeff() < 1e-10);

  Tape t4;
  const std::vector<int> bad = {2};
  CHECK_THROWS_AS(a.forward(t4, p, t4.constant(row({0, 0})), bad), ArgumentError);
}

TEST_CASE("invertible linear: rotation, hand example, determinant oracle") {
  Rng rng(5);
  ParamSet p;
  const InvLinear rot = InvLinear::create(p, "rot", 16, rng);
  CHECK(std::abs(rot.logdet(p)) < 1e-8);
  const Matrix w = rot.dense(p);
  CHECK((w.transpose() * w - Matrix::Identity(16, 16)).cwiseAbs().maxCoeff() < 1e-10);

  ParamSet q;
  Matrix diag = Matrix::Zero(2, 2);
  diag(0, 0) = 2.0;
  diag(1, 1) = 0.5;
  const InvLinear d = InvLinear::from_matrix(q, "diag", diag);
  Tape t;
  LayerOutput out = d.forward(t, q, t.constant(row({1, 2})));
  CHECK((out.value.value() - row({2, 1})).norm() < 1e-14);
  CHECK(std::abs(out.logdet.scalar()) < 1e-14);

  ParamSet r;
  const InvLinear four = InvLinear::create(r, "four", 4, rng);
  testing::jitter(r, 0.4, 6);
  const Matrix dense = four.dense(r);
  CHECK(four.logdet(r) == doctest::Approx(std::log(std::abs(testing::cofactor_det(dense)))).epsilon(1e-10));

  Tape t2;
  const Matrix x = rng.normal_matrix(3, 4);
  Var y = four.forward(t2, r, t2.constant(x)).value;
  CHECK((y.value() - x * dense.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((four.inverse(t2, r, y).value() - x).cwiseAbs().maxCoeff() < 1e-10);

  // Reconstructing from an arbitrary nonsingular matrix reproduces it.
  ParamSet s;
  const Matrix a = rng.normal_matrix(5, 5);
  CHECK((InvLinear::from_matrix(s, "a", a).dense(s) - a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("coupling: identity at init, hand example, roundtrip") {
  Rng rng(8);
  ParamSet p;
  const Coupling c = Coupling::create(p, "cp", 2, 3, 4, false, rng);
  Tape t;
  Var ctx = t.constant(row({0.1, -0.2, 0.3}));
  LayerOutput id = c.forward(t, p, t.constant(row({1, 3})), ctx);
  CHECK(id.value.value() == row({1, 3}));
  CHECK(id.logdet.scalar() == 0.0);

  // Last layer: zero weights, bias (t, raw) = (0.5, log 2).
  const nn::Linear& last = c.conditioner.layers.back();
  p.mutable_value(last.bias) << 0.5, std::log(2.0);
  Tape t2;
  LayerOutput out = c.forward(t2, p, t2.constant(row({1, 3})), t2.constant(row({0.1, -0.2, 0.3})));
  CHECK((out.value.value() - row({1, 7})).norm() < 1e-12);
  CHECK(out.logdet.scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  for (bool swap : {false, true}) {
    ParamSet q;
    const Coupling cc = Coupling::create(q, "cc", 6, 4, 8, swap, rng);
    testing::jitter(q, 0.5, 9);
    const Matrix x = rng.normal_matrix(7, 6);
    const Matrix ctx7 = rng.normal_matrix(7, 4);
    Tape t3;
    Var y = cc.forward(t3, q, t3.constant(x), t3.constant(ctx7)).value;
    CHECK((cc.inverse(t3, q, y, t3.constant(ctx7)).value() - x).cwiseAbs().maxCoeff() < 1e-8);
    const int kept = swap ? 3 : 0;
    CHECK(y.value().middleCols(kept, 3) == x.middleCols(kept, 3));
  }
}

TEST_CASE("coupling scale is clamped so it stays positive and bounded") {
  Rng rng(10);
  ParamSet p;
  const Coupling c = Coupling::create(p, "cp", 2, 0, 4, false, rng);
  p.mutable_value(c.conditioner.layers.back().bias) << 0.0, 40.0;
  Tape t;
  LayerOutput out = c.forward(t, p, t.constant(row({0, 1})), t.constant(Matrix(1, 0)));
  CHECK(out.logdet.scalar() == Coupling::kScaleClamp);
  CHECK(out.value.value()(0, 1) == doctest::Approx(std::exp(5.0)));
}

TEST_CASE("identity-initialized stack maps x to itself") {
  FlowConfig cfg{8, 3, 5, 4, 16, InvLinear::Init::Identity};
  Built b = build(cfg, 11, 0.0);
  Rng rng(12);
  const Vector x = rng.normal_vector(8), c = rng.normal_vector(5);
  const auto fw = b.stack.forward(b.params, x, c, 2);
  CHECK(fw.z == x);
  CHECK(fw.logdet == 0.0);
  CHECK(b.stack.inverse(b.params, x, c, 2) == x);

  // With the default rotation init the log-determinant is still zero.
  cfg.linear_init = InvLinear::Init::Rotation;
  Built r = build(cfg, 11, 0.0);
  CHECK(std::abs(r.stack.forward(r.params, x, c, 2).logdet) < 1e-10);
}

TEST_CASE("stack bijectivity at full size") {
  Built b = build(FlowConfig{64, 4, 32, 8, 64}, 13, 0.05);
  Rng rng(14);
  const Matrix x = rng.normal_matrix(50, 64);
  const Matrix c = rng.normal_matrix(50, 32);
  std::vector<int> cls(50);
  for (int i = 0; i < 50; ++i) cls[static_cast<std::size_t>(i)] = i % 4;
  auto [z, ld] = b.stack.forward_batch(b.params, x, c, cls);
  CHECK((b.stack.inverse_batch(b.params, z, c, cls) - x).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(ld.allFinite());
}

TEST_CASE("stack log-determinant matches the finite-difference Jacobian") {
  for (int d : {4, 6, 8}) {
    Built b = build(FlowConfig{d, 2, 3, 2, 16}, 20 + static_cast<std::uint64_t>(d), 0.2);
    Rng rng(30);
    for (int trial = 0; trial < 5; ++trial) {
      const Vector x = rng.normal_vector(d), c = rng.normal_vector(3);
      const int cls = trial % 2;
      const double analytic = b.stack.forward(b.params, x, c, cls).logdet;
      const Matrix j = fd_jacobian(b.stack, b.params, x, c, cls, 1e-5);
      const double oracle = std::log(std::abs(j.determinant()));
      CHECK(numerics::relative_error(analytic, oracle) < 1e-3);
      if (d == 4) CHECK(numerics::relative_error(analytic, std::log(std::abs(testing::cofactor_det(j)))) < 1e-3);
    }
  }
}

TEST_CASE("change of variables is invariant to splitting the stack") {
  Built b = build(FlowConfig{6, 2, 3, 5, 16}, 40, 0.2);
  const latent::Smm smm = latent::init_means(2, 6, 41);
  Rng rng(42);
  const Matrix x = rng.normal_matrix(1, 6), c = rng.normal_matrix(1, 3);
  const std::vector<int> cls = {1};
  Tape t(Tape::Mode::Inference);
  LayerOutput full = b.stack.forward(t, b.params, t.constant(x), t.constant(c), cls);
  const double whole = latent::class_logpdf(full.value.value().row(0).transpose(), 1, smm) + full.logdet.scalar();
  for (int split = 0; split <= 5; ++split) {
    LayerOutput a = b.stack.forward(t, b.params, t.constant(x), t.constant(c), cls, 0, split);
    LayerOutput z = b.stack.forward(t, b.params, a.value, t.constant(c), cls, split, 5);
    const double parts =
        latent::class_logpdf(z.value.value().row(0).transpose(), 1, smm) + a.logdet.scalar() + z.logdet.scalar();
    CHECK(parts == doctest::Approx(whole).epsilon(1e-12));
  }
}

TEST_CASE("inverse depends on the context") {
  Built b = build(FlowConfig{8, 1, 4, 3, 16}, 50, 0.2);
  Rng rng(51);
  const Vector z = rng.normal_vector(8);
  const Vector c1 = rng.normal_vector(4), c2 = rng.normal_vector(4);
  CHECK((b.stack.inverse(b.params, z, c1, 0) - b.stack.inverse(b.params, z, c2, 0)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("stack gradients match finite differences") {
  Built b = build(FlowConfig{4, 2, 2, 2, 6}, 60, 0.3);
  Rng rng(61);
  const Matrix x = rng.normal_matrix(3, 4), c = rng.normal_matrix(3, 2);
  const std::vector<int> cls = {0, 1, 1};
  auto report = testing::check_tape(b.params, [&](Tape& t, const ParamSet& q) {
    LayerOutput f = b.stack.forward(t, q, t.constant(x), t.constant(c), cls);
    Var back = b.stack.inverse(t, q, f.value, t.constant(c), cls);
    return ad::add(testing::probe(f.value), ad::add(ad::sum(f.logdet), testing::probe(ad::square(back), 3)));
  });
  INFO(report.summary());
  CHECK(report.passed());
}

TEST_CASE("stack configuration errors") {
  ParamSet p;
  Rng rng(1);
  CHECK_THROWS_AS(FlowStack::create(p, "f", FlowConfig{5, 1, 0, 2, 4}, rng), ConfigError);
  CHECK_THROWS_AS(FlowStack::create(p, "g", FlowConfig{4, 1, 0, 0, 4}, rng), ConfigError);
}
