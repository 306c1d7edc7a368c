#include "emoflow/vq/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "emoflow/errors.hpp"

namespace emoflow::vq {

namespace {

constexpr int kLipCount = 8;
constexpr int kBlinkFirst = 8;

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

Eigen::Vector3d random_color(numerics::Rng& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

}  // namespace

FaceIdentity FaceIdentity::random(numerics::Rng& rng) {
  FaceIdentity f;
  f.background_top = random_color(rng, 0.0, 0.5);
  f.background_bottom = random_color(rng, 0.0, 0.5);
  f.skin = {rng.uniform(0.6, 0.95), rng.uniform(0.45, 0.8), rng.uniform(0.3, 0.65)};
  f.center_x = 0.5 + rng.uniform(-0.03, 0.03);
  f.center_y = 0.5 + rng.uniform(-0.03, 0.03);
  f.radius = rng.uniform(0.3, 0.37);
  f.eye_spacing = rng.uniform(0.11, 0.15);
  f.stripe_period = rng.uniform(0.06, 0.1);
  return f;
}

FaceMotion motion_from_coefficients(const Vector& beta, const Vector& rho) {
  if (beta.size() < kBlinkFirst + 2 || rho.size() < 2) throw ArgumentError("motion_from_coefficients: too few coefficients");
  FaceMotion m;
  m.mouth_open = std::clamp(0.35 + 0.2 * beta.head(kLipCount).mean(), 0.0, 1.0);
  m.eye_close = std::clamp(0.25 * (beta[kBlinkFirst] + beta[kBlinkFirst + 1]), 0.0, 1.0);
  m.dx = 2.0 * std::tanh(rho[0]);
  m.dy = 2.0 * std::tanh(rho[1]);
  return m;
}

Vector render_face(const FaceIdentity& id, const FaceMotion& motion, int emotion, int classes, const ImageShape& shape) {
  if (shape.channels != 3) throw ConfigError("render_face: RGB output only");
  if (classes < 1 || emotion < 0 || emotion >= classes) throw ArgumentError("render_face: emotion out of range");
  const int h = shape.height, w = shape.width;
  const double size = std::min(h, w);
  const double px = 1.0 / size;  // one pixel in patch units
  const double cx = id.center_x + motion.dx * px * (size / 32.0);
  const double cy = id.center_y + motion.dy * px * (size / 32.0);
  const double r = id.radius;
  // Mouth: parabola y = my + curve * (x - cx)^2 with class-keyed curvature.
  const double curve = (classes == 1 ? 0.0 : 2.0 * emotion / (classes - 1) - 1.0) * 2.5;
  const double my = cy + 0.45 * r, half_mouth = 0.45 * r;
  const double opening = 0.02 + 0.12 * r * motion.mouth_open * 2.0;
  const double eye_y = cy - 0.25 * r;
  const double eye_rx = 0.09 * r * 1.2, eye_ry = 0.09 * r * 1.2 * (1.0 - 0.9 * motion.eye_close);
  const double wrinkle_angle = std::numbers::pi * emotion / classes;

  Vector img(shape.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = (x + 0.5) / w, v = (y + 0.5) / h;
      Eigen::Vector3d c = (1.0 - v) * id.background_top + v * id.background_bottom;
      const double dist = std::hypot(u - cx, v - cy);
      const double face = 1.0 - smoothstep(r - px, r + px, dist);
      // Radial shading darkens the rim of the face disc.
      const Eigen::Vector3d skin = id.skin * (1.0 - 0.25 * std::pow(std::min(dist / r, 1.0), 2));
      c = (1.0 - face) * c + face * skin;

      // Class-keyed wrinkles: three parallel lines across the forehead.
      const double fx = u - cx, fy = v - (cy - 0.6 * r);
      const double along = fx * std::cos(wrinkle_angle) + fy * std::sin(wrinkle_angle);
      const double across = -fx * std::sin(wrinkle_angle) + fy * std::cos(wrinkle_angle);
      if (std::abs(along) < 0.35 * r) {
        for (int k = -1; k <= 1; ++k) {
          const double line = 1.0 - smoothstep(0.3 * px, 1.1 * px, std::abs(across - k * 0.12 * r));
          c = (1.0 - 0.45 * line * face) * c;
        }
      }

      for (int side : {-1, 1}) {
        const double ex = (u - (cx + side * id.eye_spacing)) / eye_rx, ey = (v - eye_y) / std::max(eye_ry, 1e-3);
        const double eye = 1.0 - smoothstep(0.8, 1.2, std::hypot(ex, ey));
        c = (1.0 - eye) * c + eye * Eigen::Vector3d(0.08, 0.06, 0.05);
      }

      const double mx = u - cx;
      if (std::abs(mx) < half_mouth) {
        const double lip_y = my + curve * mx * mx;
        const double taper = 1.0 - std::pow(std::abs(mx) / half_mouth, 2);
        const double half_gap = 0.5 * opening * taper;
        const double dy = std::abs(v - lip_y);
        const double inside = 1.0 - smoothstep(half_gap, half_gap + px, dy);
        const double stripe = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * mx / id.stripe_period);
        const Eigen::Vector3d mouth = stripe > 0.6 ? Eigen::Vector3d(0.95, 0.95, 0.9) : Eigen::Vector3d(0.35, 0.05, 0.08);
        c = (1.0 - inside) * c + inside * mouth;
        const double lip = 0.7 * (1.0 - smoothstep(0.4 * px, 1.2 * px, std::abs(dy - half_gap)));
        c = (1.0 - lip) * c + lip * Eigen::Vector3d(0.6, 0.15, 0.2);
      }
      for (int ch = 0; ch < 3; ++ch) img[ch * h * w + y * w + x] = std::clamp(c[ch], 0.0, 1.0);
    }
  return img;
}

PatchCorpus synth_patches(int n, int classes, const ImageShape& shape, std::uint64_t seed) {
  if (n < 1) throw ConfigError("synth_patches: need at least one patch");
  PatchCorpus out;
  out.shape = shape;
  out.images.resize(n, shape.size());
  numerics::Rng root(seed);
  for (int i = 0; i < n; ++i) {
    numerics::Rng rng = root.split(static_cast<std::uint64_t>(i));
    const FaceIdentity id = FaceIdentity::random(rng);
    FaceMotion m;
    m.mouth_open = rng.uniform();
    m.eye_close = rng.bernoulli(0.2) ? rng.uniform() : 0.0;
    m.dx = rng.uniform(-2.0, 2.0);
    m.dy = rng.uniform(-2.0, 2.0);
    const int e = static_cast<int>(rng.index(static_cast<std::size_t>(classes)));
    out.images.row(i) = render_face(id, m, e, classes, shape).transpose();
    out.emotions.push_back(e);
  }
  return out;
}

PairCorpus synth_pairs(int n, int classes, const ImageShape& shape, std::uint64_t seed, int coeff_dim, int pose_dim) {
  if (n < 1) throw ConfigError("synth_pairs: need at least one pair");
  if (coeff_dim < kBlinkFirst + 2 || pose_dim < 2) throw ConfigError("synth_pairs: coefficient dimensions too small");
  PairCorpus out;
  out.shape = shape;
  out.sources.resize(n, shape.size());
  out.targets.resize(n, shape.size());
  out.beta = Matrix::Zero(n, coeff_dim);
  out.rho = Matrix::Zero(n, pose_dim);
  numerics::Rng root(seed);
  for (int i = 0; i < n; ++i) {
    numerics::Rng rng = root.split(static_cast<std::uint64_t>(i));
    const FaceIdentity id = FaceIdentity::random(rng);
    const int e = static_cast<int>(rng.index(static_cast<std::size_t>(classes)));
    const double lip = rng.normal();
    for (int j = 0; j < kLipCount; ++j) out.beta(i, j) = lip + 0.05 * rng.normal();
    if (rng.bernoulli(0.2)) out.beta.row(i).segment(kBlinkFirst, 2).setConstant(rng.uniform(0.0, 2.0));
    out.rho(i, 0) = 0.5 * rng.normal();
    out.rho(i, 1) = 0.5 * rng.normal();
    out.sources.row(i) = render_face(id, FaceMotion{}, e, classes, shape).transpose();
    const FaceMotion m = motion_from_coefficients(out.beta.row(i).transpose(), out.rho.row(i).transpose());
    out.targets.row(i) = render_face(id, m, e, classes, shape).transpose();
    out.emotions.push_back(e);
  }
  return out;
}

}  // namespace emoflow::vq
