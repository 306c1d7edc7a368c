#pragma once

#include <cstdint>
#include <vector>

#include "emoflow/numerics/rng.hpp"
#include "emoflow/vq/image.hpp"

namespace emoflow::vq {

/// Appearance of one synthetic face, fixed across its frames.
struct FaceIdentity {
  Eigen::Vector3d background_top;
  Eigen::Vector3d background_bottom;
  Eigen::Vector3d skin;
  double center_x = 0.5;  // fractions of the patch size
  double center_y = 0.5;
  double radius = 0.33;
  double eye_spacing = 0.13;
  double stripe_period = 0.08;

  static FaceIdentity random(numerics::Rng& rng);
};

/// Per-frame deformation.
struct FaceMotion {
  double mouth_open = 0.35;  // [0, 1]
  double eye_close = 0.0;    // [0, 1]
  double dx = 0.0;           // pixels at 32 x 32, scaled with the patch
  double dy = 0.0;
};

/// Lip coordinates 0..7 drive the mouth, 8..9 the eyelids, pose 0..1 the
/// head translation. All-zero coefficients give the neutral FaceMotion{}.
FaceMotion motion_from_coefficients(const Vector& beta, const Vector& rho);

/// Renders a face-like patch: gradient background, shaded face disc, eyes,
/// a curved mouth with striped "teeth" inside its opening, and class-keyed
/// wrinkle lines. Returns one image row in [0, 1].
Vector render_face(const FaceIdentity& id, const FaceMotion& motion, int emotion, int classes, const ImageShape& shape);

struct PatchCorpus {
  ImageShape shape;
  Matrix images;  // N x shape.size()
  std::vector<int> emotions;
};

/// Independent identities with random motions and emotions.
PatchCorpus synth_patches(int n, int classes, const ImageShape& shape, std::uint64_t seed);

/// Source/target renderings of one identity: the source is neutral, the
/// target follows (beta, rho).
struct PairCorpus {
  ImageShape shape;
  Matrix sources;  // N x shape.size()
  Matrix targets;
  Matrix beta;     // N x 64
  Matrix rho;      // N x 6
  std::vector<int> emotions;

  int size() const { return static_cast<int>(sources.rows()); }
};

PairCorpus synth_pairs(int n, int classes, const ImageShape& shape, std::uint64_t seed, int coeff_dim = 64,
                       int pose_dim = 6);

}  // namespace emoflow::vq
