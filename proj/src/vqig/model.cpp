#include "emoflow/vqig/model.hpp"

#include "emoflow/errors.hpp"
#include "emoflow/numerics/ops.hpp"

namespace emoflow::vqig {

void VqigConfig::validate(const vq::VqConfig& vq) const {
  if (coeff_dim < 1 || pose_dim < 1 || motion_dim < 1 || mapper_hidden < 1 || fuse_hidden < 1 || ff_hidden < 1)
    throw ConfigError("vqig: dimensions must be positive");
  if (heads < 1 || vq.code_dim % heads != 0) throw ConfigError("vqig: heads must divide the code dimension");
  if (layers < 0) throw ConfigError("vqig: transformer depth must be nonnegative");
  if (!(max_displacement > 0.0 && max_displacement <= 1.0)) throw ConfigError("vqig: max_displacement in (0, 1]");
  int size = warp_grid;
  while (size < vq.image.height) size *= 2;
  if (warp_grid < 1 || size != vq.image.height)
    throw ConfigError("vqig: image size must be the warp grid times a power of two");
}

AttentionBlock AttentionBlock::create(ParamSet& params, const std::string& prefix, int dim, numerics::Rng& rng) {
  AttentionBlock a;
  a.q = nn::Linear::create(params, prefix + ".q", dim, dim, rng);
  a.k = nn::Linear::create(params, prefix + ".k", dim, dim, rng);
  a.v = nn::Linear::create(params, prefix + ".v", dim, dim, rng);
  a.o = nn::Linear::create(params, prefix + ".o", dim, dim, rng);
  return a;
}

ad::Var AttentionBlock::operator()(ad::Tape& tape, const ParamSet& params, ad::Var query, ad::Var memory, int batch,
                                   int heads) const {
  ad::Var att = ad::multihead_attention(q(tape, params, query), k(tape, params, memory), v(tape, params, memory), batch,
                                        heads);
  return ad::add(query, o(tape, params, att));
}

VqigModel VqigModel::create(const VqigConfig& config, const vq::PatchAutoencoder& ae, std::uint64_t seed) {
  config.validate(ae.config);
  VqigModel m;
  m.config = config;
  m.vq = ae.config;
  numerics::Rng rng(seed);
  const int d = ae.config.code_dim;
  m.mapper = nn::Mlp::create(m.params, "vqig.mapper", {config.coeff_dim + config.pose_dim, config.mapper_hidden,
                                                        config.motion_dim},
                             rng, nn::Activation::Tanh, true);
  // Random weights with zero bias: no displacement while sigma = 0, but the
  // mapper still receives a gradient through this layer.
  m.warp = nn::Linear::create(m.params, "vqig.warp", config.motion_dim, 2 * config.warp_grid * config.warp_grid, rng);
  m.warped_encoder = vq::ConvEncoder::create(m.params, "vqig.warped_encoder", ae.config, rng);
  for (std::size_t i = 0; i < m.warped_encoder.layers.size(); ++i) {
    m.params.set(m.warped_encoder.layers[i].weight, ae.params.value(ae.encoder.layers[i].weight));
    m.params.set(m.warped_encoder.layers[i].bias, ae.params.value(ae.encoder.layers[i].bias));
  }
  m.fuse = nn::Mlp::create(m.params, "vqig.fuse", {2 * d, config.fuse_hidden, d}, rng, nn::Activation::Swish, false);
  m.cross = AttentionBlock::create(m.params, "vqig.cross", d, rng);
  m.adain = nn::Linear::create(m.params, "vqig.adain", config.motion_dim, 2 * d, rng);
  m.positions = m.params.add("vqig.positions", rng.normal_matrix(ae.config.cells(), d, 0.1));
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = "vqig.transformer" + std::to_string(l);
    m.transformer.push_back(TransformerLayer{
        AttentionBlock::create(m.params, p + ".attention", d, rng),
        nn::Mlp::create(m.params, p + ".ff", {d, config.ff_hidden, d}, rng, nn::Activation::Swish, false)});
  }
  m.head = nn::Linear::create(m.params, "vqig.head", d, ae.config.codes, rng);
  return m;
}

ad::Var map_motion(ad::Tape& tape, const VqigModel& m, const ParamSet& params, ad::Var beta, ad::Var rho) {
  if (beta.cols() != m.config.coeff_dim || rho.cols() != m.config.pose_dim || beta.rows() != rho.rows())
    throw ArgumentError("map_motion: coefficient shapes do not match the mapper");
  return m.mapper(tape, params, ad::concat_cols({beta, rho}));
}

Warped warp_image(ad::Tape& tape, const VqigModel& m, const ParamSet& params, ad::Var images, ad::Var sigma) {
  const vq::ImageShape& s = m.vq.image;
  if (images.cols() != s.size() || images.rows() != sigma.rows()) throw ArgumentError("warp_image: shape mismatch");
  const double limit = m.config.max_displacement * s.height;
  ad::Var low = ad::scale(ad::tanh(m.warp(tape, params, sigma)), limit);
  for (int size = m.config.warp_grid; size < s.height; size *= 2) low = ad::upsample_nearest2x(low, 2, size, size);
  Warped w;
  w.displacement = low;
  w.image = ad::grid_sample(images, low, s.channels, s.height, s.width);
  return w;
}

ad::Var adain(ad::Var tokens, ad::Var scale, ad::Var shift, int cells, double eps) {
  if (tokens.rows() % cells != 0) throw ArgumentError("adain: token rows are not a multiple of the cell count");
  const auto batch = tokens.rows() / cells;
  if (scale.rows() != batch || shift.rows() != batch || scale.cols() != tokens.cols() || shift.cols() != tokens.cols())
    throw ArgumentError("adain: scale/shift must be B x d");
  std::vector<int> owner(static_cast<std::size_t>(tokens.rows()));
  for (std::size_t r = 0; r < owner.size(); ++r) owner[r] = static_cast<int>(r / static_cast<std::size_t>(cells));
  ad::Var normed = ad::instance_norm(tokens, cells, eps);
  return ad::add(ad::mul(normed, ad::gather_rows(scale, owner)), ad::gather_rows(shift, owner));
}

ad::Var fuse_and_attend(ad::Tape& tape, const VqigModel& m, const ParamSet& params, ad::Var z_w, ad::Var z_c,
                        ad::Var sigma) {
  if (z_w.rows() != z_c.rows() || z_w.cols() != z_c.cols()) throw ArgumentError("fuse_and_attend: grids differ");
  const int cells = m.vq.cells(), d = m.vq.code_dim;
  if (z_c.rows() != sigma.rows() * cells || z_c.cols() != d) throw ArgumentError("fuse_and_attend: grid shape");
  const int batch = static_cast<int>(sigma.rows());
  ad::Var fused = m.fuse(tape, params, ad::concat_cols({z_w, z_c}));
  ad::Var attended = m.cross(tape, params, fused, z_c, batch, m.config.heads);
  // The AdaIN branch is residual: its zero-bias generator leaves the grid
  // untouched while sigma = 0.
  ad::Var style = m.adain(tape, params, sigma);
  return ad::add(attended, adain(attended, ad::slice_cols(style, 0, d), ad::slice_cols(style, d, d), cells));
}

ad::Var predict_codes(ad::Tape& tape, const VqigModel& m, const ParamSet& params, ad::Var fused) {
  const int cells = m.vq.cells();
  const int batch = static_cast<int>(fused.rows() / cells);
  ad::Var h = ad::add(fused, vq::tile_rows(tape.param(params, m.positions), batch));
  for (const auto& layer : m.transformer) {
    h = layer.attention(tape, params, h, h, batch, m.config.heads);
    h = ad::add(h, layer.feed_forward(tape, params, h));
  }
  return m.head(tape, params, h);
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k)
      if (logits(r, k) > logits(r, best)) best = k;
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

Matrix lookup_codes(const Matrix& codebook, std::span<const int> indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), codebook.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= codebook.rows()) throw ArgumentError("lookup_codes: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = codebook.row(indices[i]);
  }
  return out;
}

VqigForward vqig_forward(ad::Tape& tape, const VqigModel& m, const ParamSet& params, const vq::PatchAutoencoder& ae,
                         const Matrix& sources, const Matrix& beta, const Matrix& rho) {
  if (!(ae.config == m.vq)) throw ConfigError("vqig: autoencoder configuration differs from the model's");
  if (sources.cols() != m.vq.image.size()) throw ConfigError("vqig: source resolution mismatch");
  tape.freeze(ae.params);
  VqigForward f;
  f.z_c = tape.constant(ae.encode_quantized(sources).codes);
  f.sigma = map_motion(tape, m, params, tape.constant(beta), tape.constant(rho));
  f.warped = warp_image(tape, m, params, tape.constant(sources), f.sigma);
  f.z_w = m.warped_encoder(tape, params, f.warped.image);
  f.fused = fuse_and_attend(tape, m, params, f.z_w, f.z_c, f.sigma);
  f.logits = predict_codes(tape, m, params, f.fused);
  return f;
}

Matrix animate(const VqigModel& m, const vq::PatchAutoencoder& ae, const Vector& source, const Matrix& beta,
               const Matrix& rho, std::vector<int>* codes) {
  if (source.size() != m.vq.image.size()) throw ConfigError("animate: source resolution differs from the model's");
  if (beta.rows() != rho.rows()) throw ArgumentError("animate: coefficient tracks differ in length");
  const Eigen::Index t_len = beta.rows();
  Matrix frames(t_len, source.size());
  if (codes) codes->clear();
  const Matrix z_c = ae.encode_quantized(source.transpose()).codes;
  constexpr Eigen::Index kChunk = 32;
  for (Eigen::Index s = 0; s < t_len; s += kChunk) {
    const Eigen::Index n = std::min(kChunk, t_len - s);
    ad::Tape tape(ad::Tape::Mode::Inference);
    tape.freeze(ae.params);
    ad::Var zc = tape.constant(z_c.replicate(n, 1));
    ad::Var sigma = map_motion(tape, m, m.params, tape.constant(beta.middleRows(s, n)), tape.constant(rho.middleRows(s, n)));
    const Warped w = warp_image(tape, m, m.params, tape.constant(source.transpose().replicate(n, 1)), sigma);
    ad::Var fused = fuse_and_attend(tape, m, m.params, m.warped_encoder(tape, m.params, w.image), zc, sigma);
    const std::vector<int> s_hat = argmax_rows(predict_codes(tape, m, m.params, fused).value());
    frames.middleRows(s, n) = ae.decode(lookup_codes(ae.codes(), s_hat));
    if (codes) codes->insert(codes->end(), s_hat.begin(), s_hat.end());
  }
  return frames;
}

}  // namespace emoflow::vqig
