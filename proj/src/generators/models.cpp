#include "emoflow/generators/models.hpp"

#include "emoflow/errors.hpp"

namespace emoflow::gen {

ExpFlowModel ExpFlowModel::create(const ExpFlowConfig& config, std::uint64_t seed) {
  if (config.classes < 1) throw ConfigError("ExpFlow: class count must be positive");
  if (config.dropout < 0.0 || config.dropout > 1.0) throw ConfigError("ExpFlow: dropout must lie in [0, 1]");
  if (config.lambda_con < 0.0) throw ConfigError("ExpFlow: consistency weight must be nonnegative");
  if (!(config.dof > 0.0)) throw ConfigError("ExpFlow: degrees of freedom must be positive");
  ExpFlowModel m;
  m.config = config;
  m.config.encoders.coeff_dim = config.dim;
  m.config.encoders.classes = config.classes;
  numerics::Rng rng(seed);
  m.encoders = context::ContextEncoders::create(m.params, "context", m.config.encoders, context::Variant::Expression,
                                                rng);
  m.flow = flow::FlowStack::create(
      m.params, "flow",
      flow::FlowConfig{config.dim, config.classes, m.encoders.dim(), config.steps, config.hidden, config.linear_init},
      rng);
  m.means = m.params.add("smm.means", latent::init_means(config.classes, config.dim, rng.next_u64(), config.dof).means);
  return m;
}

PoseFlowModel PoseFlowModel::create(const PoseFlowConfig& config, std::uint64_t seed) {
  if (config.dropout < 0.0 || config.dropout > 1.0) throw ConfigError("PoseFlow: dropout must lie in [0, 1]");
  PoseFlowModel m;
  m.config = config;
  m.config.encoders.pose_dim = config.dim;
  numerics::Rng rng(seed);
  m.encoders = context::ContextEncoders::create(m.params, "context", m.config.encoders, context::Variant::Pose, rng);
  m.flow = flow::FlowStack::create(
      m.params, "flow", flow::FlowConfig{config.dim, 1, m.encoders.dim(), config.steps, config.hidden, config.linear_init},
      rng);
  return m;
}

FrameTable FrameTable::build(const context::Dataset& ds, const context::EncoderConfig& config,
                             context::Variant variant) {
  if (ds.sequences.empty()) throw DataError("frame table: dataset is empty");
  const int n = ds.total_frames();
  FrameTable ft;
  const bool expr = variant == context::Variant::Expression;
  int row = 0;
  for (std::size_t s = 0; s < ds.sequences.size(); ++s) {
    const auto& seq = ds.sequences[s];
    const Matrix& track = expr ? seq.beta : seq.pose;
    for (int t = 0; t < seq.length(); ++t, ++row) {
      const context::RawContext r = context::raw_context(seq, t, config, variant);
      if (row == 0) {
        ft.target.resize(n, track.cols());
        ft.raw.source.resize(n, r.source.cols());
        ft.raw.audio.resize(n, r.audio.cols());
        ft.raw.history.resize(n, r.history.cols());
        ft.raw.keep = Vector::Ones(n);
      }
      ft.target.row(row) = track.row(t);
      ft.raw.source.row(row) = r.source.row(0);
      ft.raw.audio.row(row) = r.audio.row(0);
      ft.raw.history.row(row) = r.history.row(0);
      if (expr) ft.raw.emotion.push_back(seq.emotion);
      ft.classes.push_back(expr ? seq.emotion : 0);
      ft.previous.push_back(t == 0 ? -1 : row - 1);
      ft.sequence.push_back(static_cast<int>(s));
      ft.frame.push_back(t);
    }
  }
  return ft;
}

FrameBatch FrameTable::select(std::span<const int> rows) const {
  const auto b = static_cast<Eigen::Index>(rows.size());
  FrameBatch out;
  out.target.resize(b, target.cols());
  out.raw.source.resize(b, raw.source.cols());
  out.raw.audio.resize(b, raw.audio.cols());
  out.raw.history.resize(b, raw.history.cols());
  out.raw.keep = Vector::Ones(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const int r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= size()) throw ArgumentError("frame table: row out of range");
    out.target.row(i) = target.row(r);
    out.raw.source.row(i) = raw.source.row(r);
    out.raw.audio.row(i) = raw.audio.row(r);
    out.raw.history.row(i) = raw.history.row(r);
    if (!raw.emotion.empty()) out.raw.emotion.push_back(raw.emotion[static_cast<std::size_t>(r)]);
    out.classes.push_back(classes[static_cast<std::size_t>(r)]);
  }
  return out;
}

ad::Var encode_context(ad::Tape& tape, const context::ContextEncoders& enc, const ParamSet& params,
                       const context::RawContext& raw) {
  return enc.encode(tape, params, raw);
}

}  // namespace emoflow::gen
