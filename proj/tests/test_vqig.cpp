#include <doctest.h>

#include <cmath>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/ops.hpp"
#include "emoflow/vq/train.hpp"
#include "emoflow/vqig/train.hpp"
#include "support.hpp"

using namespace emoflow;
using namespace emoflow::vqig;
using numerics::Rng;

namespace {

vq::VqConfig tiny_vq() {
  vq::VqConfig c;
  c.image = vq::ImageShape{3, 8, 8};
  c.grid = 2;
  c.code_dim = 4;
  c.codes = 6;
  c.widths = {3};
  return c;
}

VqigConfig tiny_vqig() {
  VqigConfig c;
  c.coeff_dim = 10;
  c.pose_dim = 2;
  c.motion_dim = 3;
  c.mapper_hidden = 4;
  c.warp_grid = 2;
  c.fuse_hidden = 5;
  c.heads = 2;
  c.layers = 1;
  c.ff_hidden = 5;
  return c;
}

vq::PatchAutoencoder frozen_ae(std::uint64_t seed) {
  vq::PatchAutoencoder ae = vq::PatchAutoencoder::create(tiny_vq(), seed);
  ae.frozen = true;
  return ae;
}

}  // namespace

TEST_CASE("motion mapper") {
  const vq::PatchAutoencoder ae = frozen_ae(1);
  VqigModel m = VqigModel::create(tiny_vqig(), ae, 2);
  Rng rng(3);
  const Matrix beta = rng.normal_matrix(4, 10), rho = rng.normal_matrix(4, 2);
  ad::Tape t(ad::Tape::Mode::Inference);
  CHECK(map_motion(t, m, m.params, t.constant(beta), t.constant(rho)).value().isZero(0.0));
  testing::jitter(m.params, 0.2, 4);
  ad::Tape t1(ad::Tape::Mode::Inference), t2(ad::Tape::Mode::Inference);  // a tape caches parameter values
  const Matrix s1 = map_motion(t1, m, m.params, t1.constant(beta), t1.constant(rho)).value();
  CHECK(s1 == map_motion(t2, m, m.params, t2.constant(beta), t2.constant(rho)).value());
  CHECK_FALSE(s1.isZero(0.0));
  const auto r = testing::check_tape(m.params, [&](ad::Tape& tape, const ParamSet& p) {
    return testing::probe(map_motion(tape, m, p, tape.constant(beta), tape.constant(rho)));
  });
  CHECK_MESSAGE(r.passed(), r.summary());
}

TEST_CASE("warp") {
  const vq::PatchAutoencoder ae = frozen_ae(5);
  VqigModel m = VqigModel::create(tiny_vqig(), ae, 6);
  const Matrix img = Rng(7).uniform_matrix(2, 192);
  ad::Tape t;
  SUBCASE("zero motion is the identity") {
    const Warped w = warp_image(t, m, m.params, t.constant(img), t.constant(Matrix::Zero(2, 3)));
    CHECK((w.image.value() - img).cwiseAbs().maxCoeff() <= 1e-6);
  }
  SUBCASE("unit horizontal displacement shifts by one pixel with a clamped border") {
    // Zero weights and a bias of atanh(1 / limit) give dx = 1, dy = 0 everywhere.
    const double limit = m.config.max_displacement * 8;
    m.params.mutable_value(m.warp.weight).setZero();
    Matrix bias = Matrix::Zero(1, 8);
    bias.leftCols(4).setConstant(std::atanh(1.0 / limit));
    m.params.set(m.warp.bias, bias);
    const Warped w = warp_image(t, m, m.params, t.constant(img), t.constant(Matrix::Zero(2, 3)));
    const Matrix& out = w.image.value();
    double worst = 0.0;
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            const int src = std::min(x + 1, 7);
            worst = std::max(worst, std::abs(out(b, c * 64 + y * 8 + x) - img(b, c * 64 + y * 8 + src)));
          }
    CHECK(worst < 1e-9);
  }
  SUBCASE("gradients through the displacement grid") {
    testing::jitter(m.params, 0.3, 8);
    const Matrix sigma = Rng(9).normal_matrix(2, 3);
    const auto r = testing::check_tape(m.params, [&](ad::Tape& tape, const ParamSet& p) {
      return testing::probe(warp_image(tape, m, p, tape.constant(img), tape.constant(sigma)).image);
    });
    CHECK_MESSAGE(r.worst().name.rfind("vqig.", 0) == 0, r.summary());
    CHECK_MESSAGE(r.passed(), r.summary());
  }
}

TEST_CASE("fusion, attention and AdaIN") {
  const vq::PatchAutoencoder ae = frozen_ae(10);
  VqigModel m = VqigModel::create(tiny_vqig(), ae, 11);
  Rng rng(12);
  const Matrix q = rng.normal_matrix(8, 4), k = rng.normal_matrix(8, 4);
  for (const Matrix& w : ad::attention_weights(q, k, 2, 2))
    CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);

  ad::Tape t;
  SUBCASE("AdaIN passes standardized grids through at unit scale and zero shift") {
    Matrix x = rng.normal_matrix(8, 4);
    for (int b = 0; b < 2; ++b) {
      auto blk = x.middleRows(4 * b, 4);
      blk.rowwise() -= blk.colwise().mean();
      blk.array().rowwise() /= blk.array().square().colwise().mean().sqrt();
    }
    const Matrix y =
        adain(t.constant(x), t.constant(Matrix::Ones(2, 4)), t.constant(Matrix::Zero(2, 4)), 4, 0.0).value();
    CHECK((y - x).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("AdaIN output carries the dictated statistics") {
    const Matrix x = rng.normal_matrix(40, 4) * 3.0;
    Matrix scale(2, 4), shift(2, 4);
    scale << 0.5, 2.0, 1.5, 3.0, 1.0, 0.2, 4.0, 0.7;
    shift << -1.0, 0.0, 2.0, 5.0, 0.3, -0.3, 1.0, 0.0;
    const Matrix y = adain(t.constant(x), t.constant(scale), t.constant(shift), 20).value();
    for (int b = 0; b < 2; ++b) {
      const Matrix blk = y.middleRows(20 * b, 20);
      const Eigen::RowVectorXd mean = blk.colwise().mean();
      const Eigen::RowVectorXd var = (blk.rowwise() - mean).array().square().colwise().mean();
      CHECK((mean - shift.row(b)).cwiseAbs().maxCoeff() < 1e-3);
      CHECK((var.array().sqrt() - scale.row(b).array()).abs().maxCoeff() < 1e-3);
    }
  }
  SUBCASE("single-cell attention returns the value projection") {
    ParamSet p;
    Rng r2(13);
    const AttentionBlock blk = AttentionBlock::create(p, "a", 4, r2);
    const Matrix query = r2.normal_matrix(1, 4), memory = r2.normal_matrix(1, 4);
    const Matrix out = blk(t, p, t.constant(query), t.constant(memory), 1, 2).value();
    const Matrix v = memory * p.value(blk.v.weight) + p.value(blk.v.bias);
    const Matrix expected = query + v * p.value(blk.o.weight) + p.value(blk.o.bias);
    CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("zero sigma leaves the AdaIN branch silent; grid mismatch is rejected") {
    const Matrix zw = rng.normal_matrix(8, 4), zc = rng.normal_matrix(8, 4);
    ad::Var sigma0 = t.constant(Matrix::Zero(2, 3));
    ad::Var fused = fuse_and_attend(t, m, m.params, t.constant(zw), t.constant(zc), sigma0);
    ad::Var attended = m.cross(t, m.params, m.fuse(t, m.params, ad::concat_cols({t.constant(zw), t.constant(zc)})),
                               t.constant(zc), 2, 2);
    CHECK(fused.value() == attended.value());
    CHECK_THROWS_AS(fuse_and_attend(t, m, m.params, t.constant(zw.topRows(4)), t.constant(zc), sigma0),
                    ArgumentError);
  }
}

TEST_CASE("code prediction and lookup") {
  CHECK(argmax_rows(Matrix::Zero(3, 6)) == std::vector<int>{0, 0, 0});
  Matrix one_hot = Matrix::Zero(4, 10);
  one_hot.col(7).setOnes();
  CHECK(argmax_rows(one_hot) == std::vector<int>(4, 7));
  const Matrix book = Rng(14).normal_matrix(10, 3);
  const std::vector<int> s = {7, 2, 7};
  const Matrix z = lookup_codes(book, s);
  for (int i = 0; i < 3; ++i) CHECK(z.row(i) == book.row(s[static_cast<std::size_t>(i)]));
  CHECK_THROWS_AS(lookup_codes(book, std::vector<int>{10}), ArgumentError);
}

TEST_CASE("VQIG losses") {
  ad::Tape t;
  const std::vector<int> s = {3, 0, 63, 12};
  const Matrix zc = Rng(15).normal_matrix(4, 5);
  const CodeLosses u = vqig_losses(t.constant(Matrix::Zero(4, 64)), s, t.constant(zc), t.constant(zc));
  CHECK(u.code.scalar() == doctest::Approx(std::log(64.0)).epsilon(1e-12));
  CHECK(u.code.scalar() == doctest::Approx(4.15888).epsilon(1e-6));
  CHECK(u.feat.scalar() == 0.0);
  Matrix peaked = Matrix::Zero(4, 64);
  for (int i = 0; i < 4; ++i) peaked(i, s[static_cast<std::size_t>(i)]) = 60.0;
  CHECK(vqig_losses(t.constant(peaked), s, t.constant(zc), t.constant(zc)).code.scalar() < 1e-20);
  CHECK_THROWS_AS(vqig_losses(t.constant(peaked), std::vector<int>{0, 1, 64, 2}, t.constant(zc), t.constant(zc)),
                  ArgumentError);
}

TEST_CASE("VQIG objective matches finite differences for every trainable part") {
  const vq::PatchAutoencoder ae = frozen_ae(16);
  VqigModel m = VqigModel::create(tiny_vqig(), ae, 17);
  testing::jitter(m.params, 0.2, 18);
  const vq::PairCorpus pairs = vq::synth_pairs(3, 2, tiny_vq().image, 19, 10, 2);
  const std::vector<int> rows = {0, 1, 2};
  const vq::IdentityFeatures phi;
  const auto r = testing::check_tape(m.params, [&](ad::Tape& t, const ParamSet& p) {
    return vqig_objective(t, m, p, ae, pairs, rows, phi, 0.25, 1.0).total;
  });
  CHECK_MESSAGE(r.passed(), r.summary());
  CHECK(r.entries.size() == m.params.size());
}

TEST_CASE("zero-motion identity chain and frozen components") {
  vq::PatchAutoencoder ae = frozen_ae(20);
  const VqigModel m = VqigModel::create(tiny_vqig(), ae, 21);
  const vq::PairCorpus pairs = vq::synth_pairs(6, 2, tiny_vq().image, 22, 10, 2);
  ad::Tape t(ad::Tape::Mode::Inference);
  const VqigForward f = vqig_forward(t, m, m.params, ae, pairs.sources, pairs.beta, pairs.rho);
  CHECK(f.sigma.value().isZero(0.0));
  CHECK((f.warped.image.value() - pairs.sources).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((f.z_w.value() - ae.encode(pairs.sources)).cwiseAbs().maxCoeff() <= 1e-12);

  const ParamSet before = ae.params;
  VqigTrainConfig tc;
  tc.steps = 6;
  tc.batch = 3;
  tc.warmup = 3;
  tc.lambda_adv = 0.5;
  const auto trained = train_vqig(pairs, ae, tiny_vqig(), tc, 23);
  CHECK(ae.params == before);
  CHECK(trained.second.total.size() == 6);
  CHECK(trained.second.rec[0] > 0.0);
  CHECK(trained.first.params.all_finite());

  const auto again = train_vqig(pairs, ae, tiny_vqig(), tc, 23);
  CHECK(again.second.total == trained.second.total);

  vq::PatchAutoencoder unfrozen = ae;
  unfrozen.frozen = false;
  CHECK_THROWS_AS(train_vqig(pairs, unfrozen, tiny_vqig(), tc, 1), ConfigError);
}

TEST_CASE("animate") {
  const vq::PatchAutoencoder ae = frozen_ae(24);
  VqigModel m = VqigModel::create(tiny_vqig(), ae, 25);
  testing::jitter(m.params, 0.1, 26);
  const Vector source = Rng(27).uniform_matrix(192, 1);
  Matrix beta = Matrix::Zero(5, 10), rho = Matrix::Zero(5, 2);
  beta.row(3).setConstant(0.7);
  std::vector<int> codes;
  const Matrix frames = animate(m, ae, source, beta, rho, &codes);
  CHECK(frames.rows() == 5);
  CHECK(codes.size() == 20);
  CHECK(frames.row(0) == frames.row(1));
  CHECK(frames.row(0) == frames.row(4));
  CHECK(animate(m, ae, source, beta, rho) == frames);
  CHECK_THROWS_AS(animate(m, ae, Vector::Zero(100), beta, rho), ConfigError);
  const Matrix decoded = ae.decode(lookup_codes(ae.codes(), std::span<const int>(codes.data(), 4)));
  CHECK(decoded.row(0) == frames.row(0));
}

TEST_CASE("configuration validation") {
  VqigConfig c = tiny_vqig();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(tiny_vq()), ConfigError);
  c = tiny_vqig();
  c.warp_grid = 3;
  CHECK_THROWS_AS(c.validate(tiny_vq()), ConfigError);
}
