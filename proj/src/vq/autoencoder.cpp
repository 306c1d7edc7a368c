#include "emoflow/vq/autoencoder.hpp"

#include <cmath>
#include <limits>

#include "emoflow/errors.hpp"

namespace emoflow::vq {

int VqConfig::stages() const {
  int s = 0;
  for (int size = image.height; size > grid; size /= 2) ++s;
  return s;
}

void VqConfig::validate() const {
  if (image.channels < 1 || image.height < 1 || image.width != image.height)
    throw ConfigError("vq: square images with at least one channel required");
  if (grid < 1 || codes < 2 || code_dim < 1) throw ConfigError("vq: grid >= 1, codes >= 2 and code_dim >= 1 required");
  if ((grid << stages()) != image.height)
    throw ConfigError("vq: image size must be the grid size times a power of two");
  if (widths.empty()) throw ConfigError("vq: at least one encoder width required");
  for (int w : widths)
    if (w < 1) throw ConfigError("vq: encoder widths must be positive");
}

ConvLayer ConvLayer::create(ParamSet& params, const std::string& prefix, const ad::ConvGeometry& g,
                            numerics::Rng& rng) {
  ConvLayer c;
  c.geometry = g;
  const int fan_in = g.in_channels * g.kernel * g.kernel;
  c.weight = params.add(prefix + ".weight", rng.normal_matrix(fan_in, g.out_channels, 1.0 / std::sqrt(fan_in)));
  c.bias = params.add(prefix + ".bias", Matrix::Zero(1, g.out_channels));
  return c;
}

ad::Var ConvLayer::operator()(ad::Tape& tape, const ParamSet& params, ad::Var x) const {
  return ad::conv2d(x, tape.param(params, weight), tape.param(params, bias), geometry);
}

namespace {
int stage_width(const VqConfig& cfg, int stage) {
  return cfg.widths[std::min<std::size_t>(static_cast<std::size_t>(stage), cfg.widths.size() - 1)];
}
}  // namespace

ConvEncoder ConvEncoder::create(ParamSet& params, const std::string& prefix, const VqConfig& cfg, numerics::Rng& rng) {
  cfg.validate();
  ConvEncoder e;
  int channels = cfg.image.channels, size = cfg.image.height;
  for (int s = 0; s < cfg.stages(); ++s) {
    const int out = stage_width(cfg, s);
    e.layers.push_back(ConvLayer::create(params, prefix + ".conv" + std::to_string(s),
                                         ad::ConvGeometry{channels, size, size, out, 3, 2, 1}, rng));
    channels = out;
    size /= 2;
  }
  e.layers.push_back(ConvLayer::create(params, prefix + ".project",
                                       ad::ConvGeometry{channels, size, size, cfg.code_dim, 1, 1, 0}, rng));
  e.out_channels = cfg.code_dim;
  e.cells = cfg.cells();
  return e;
}

ad::Var ConvEncoder::operator()(ad::Tape& tape, const ParamSet& params, ad::Var images) const {
  ad::Var h = images;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) h = ad::swish(layers[i](tape, params, h));
  return grid_to_tokens(layers.back()(tape, params, h), out_channels, cells);
}

ConvDecoder ConvDecoder::create(ParamSet& params, const std::string& prefix, const VqConfig& cfg, numerics::Rng& rng) {
  cfg.validate();
  ConvDecoder d;
  const int stages = cfg.stages();
  int size = cfg.grid;
  int channels = stage_width(cfg, stages - 1 < 0 ? 0 : stages - 1);
  d.layers.push_back(ConvLayer::create(params, prefix + ".input",
                                       ad::ConvGeometry{cfg.code_dim, size, size, channels, 3, 1, 1}, rng));
  for (int s = stages - 1; s >= 0; --s) {
    size *= 2;
    const int out = stage_width(cfg, std::max(s - 1, 0));
    d.layers.push_back(ConvLayer::create(params, prefix + ".up" + std::to_string(s),
                                         ad::ConvGeometry{channels, size, size, out, 3, 1, 1}, rng));
    channels = out;
  }
  d.layers.push_back(ConvLayer::create(params, prefix + ".output",
                                       ad::ConvGeometry{channels, size, size, cfg.image.channels, 3, 1, 1}, rng));
  d.in_channels = cfg.code_dim;
  d.cells = cfg.cells();
  return d;
}

ad::Var ConvDecoder::operator()(ad::Tape& tape, const ParamSet& params, ad::Var tokens) const {
  ad::Var h = ad::swish(layers.front()(tape, params, tokens_to_grid(tokens, in_channels, cells)));
  for (std::size_t i = 1; i + 1 < layers.size(); ++i) {
    const auto& g = layers[i].geometry;
    h = ad::swish(layers[i](tape, params, ad::upsample_nearest2x(h, g.in_channels, g.height / 2, g.width / 2)));
  }
  return ad::sigmoid(layers.back()(tape, params, h));
}

Quantized quantize(const Matrix& tokens, const Matrix& codebook) {
  if (tokens.cols() != codebook.cols()) throw ArgumentError("quantize: code dimension mismatch");
  if (codebook.rows() < 1) throw ArgumentError("quantize: empty codebook");
  Quantized q;
  q.codes.resize(tokens.rows(), tokens.cols());
  q.indices.resize(static_cast<std::size_t>(tokens.rows()));
  for (Eigen::Index r = 0; r < tokens.rows(); ++r) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = 0;
    for (Eigen::Index k = 0; k < codebook.rows(); ++k) {
      const double d = (tokens.row(r) - codebook.row(k)).squaredNorm();
      if (d < best) {  // strict: the first minimizer wins ties
        best = d;
        arg = k;
      }
    }
    q.indices[static_cast<std::size_t>(r)] = static_cast<int>(arg);
    q.codes.row(r) = codebook.row(arg);
  }
  return q;
}

PatchAutoencoder PatchAutoencoder::create(const VqConfig& config, std::uint64_t seed) {
  config.validate();
  PatchAutoencoder ae;
  ae.config = config;
  numerics::Rng rng(seed);
  ae.encoder = ConvEncoder::create(ae.params, "vq.encoder", config, rng);
  ae.decoder = ConvDecoder::create(ae.params, "vq.decoder", config, rng);
  ae.codebook = ae.params.add("vq.codebook", rng.normal_matrix(config.codes, config.code_dim));
  return ae;
}

Matrix PatchAutoencoder::encode(const Matrix& images) const {
  ad::Tape t(ad::Tape::Mode::Inference);
  return encoder(t, params, t.constant(images)).value();
}

Quantized PatchAutoencoder::encode_quantized(const Matrix& images) const { return quantize(encode(images), codes()); }

Matrix PatchAutoencoder::decode(const Matrix& tokens) const {
  ad::Tape t(ad::Tape::Mode::Inference);
  return decoder(t, params, t.constant(tokens)).value();
}

Matrix PatchAutoencoder::reconstruct(const Matrix& images) const { return decode(encode_quantized(images).codes); }

}  // namespace emoflow::vq
