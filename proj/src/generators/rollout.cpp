#include "emoflow/generators/rollout.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "emoflow/errors.hpp"

namespace emoflow::gen {

namespace {

int resolve_length(const RolloutOptions& o, const context::AudioFeatureProvider& audio) {
  const int t = o.length > 0 ? o.length : audio.frames();
  if (t > audio.frames()) throw ArgumentError("rollout: output longer than the audio track");
  return t;
}

Matrix history_rows(const Matrix& frames, int t, int tau) {
  const int start = std::max(0, t - tau);
  return frames.middleRows(start, t - start);
}

}  // namespace

RolloutResult rollout_expression(const ExpFlowModel& model, const Vector& source,
                                 const context::AudioFeatureProvider& audio, int emotion,
                                 const RolloutOptions& options, const LatentBank* bank,
                                 const Matrix* transfer_latents) {
  if (emotion < 0 || emotion >= model.classes()) throw ArgumentError("rollout: emotion class out of range");
  const int t_len = resolve_length(options, audio);
  const bool transfer = options.mode == RolloutOptions::Mode::Transfer;
  if (transfer && (!transfer_latents || transfer_latents->rows() < t_len))
    throw ArgumentError("rollout: transfer mode needs one reference latent per output frame");
  numerics::Rng rng(options.seed);
  const latent::Smm smm = model.smm();
  std::optional<LatentBank> class_bank;
  if (options.project && bank) {
    class_bank = bank->subset(emotion);
    if (class_bank->size() == 0) class_bank = *bank;
  }
  RolloutResult out;
  out.untrained = model.trained_steps == 0;
  out.frames.resize(t_len, model.dim());
  out.latents.resize(t_len, model.dim());
  for (int t = 0; t < t_len; ++t) {
    const context::RawContext raw = context::raw_context(source, audio, t, history_rows(out.frames, t, model.config.encoders.history),
                                                         emotion, model.config.encoders, context::Variant::Expression);
    const Vector ctx = model.encoders.encode(model.params, raw).row(0).transpose();
    Vector z = transfer ? Vector(transfer_latents->row(t).transpose()) : latent::sample_class(emotion, smm, rng);
    if (class_bank) z = manifold_project(z, *class_bank);
    out.latents.row(t) = z.transpose();
    out.frames.row(t) = model.flow.inverse(model.params, z, ctx, emotion).transpose();
  }
  return out;
}

Matrix reference_latents(const ExpFlowModel& model, const context::CoeffSequence& reference) {
  context::Dataset one;
  one.sequences.push_back(reference);
  const FrameTable table = FrameTable::build(one, model.config.encoders, context::Variant::Expression);
  std::vector<int> rows(static_cast<std::size_t>(table.size()));
  for (int i = 0; i < table.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
  const FrameBatch b = table.select(rows);
  return model.flow.forward_batch(model.params, b.target, model.encoders.encode(model.params, b.raw), b.classes).first;
}

RolloutResult emotion_transfer(const ExpFlowModel& model, const context::CoeffSequence& reference,
                               const Vector& target_source, const context::AudioFeatureProvider& target_audio,
                               RolloutOptions options, const LatentBank* bank) {
  const int t_len = resolve_length(options, target_audio);
  if (reference.length() < t_len) throw ArgumentError("emotion_transfer: reference shorter than the output");
  const Matrix z = reference_latents(model, reference);
  options.mode = RolloutOptions::Mode::Transfer;
  options.length = t_len;
  return rollout_expression(model, target_source, target_audio, reference.emotion, options,
                            options.project ? bank : nullptr, &z);
}

RolloutResult rollout_pose(const PoseFlowModel& model, const context::AudioFeatureProvider& audio,
                           const RolloutOptions& options) {
  const int t_len = resolve_length(options, audio);
  numerics::Rng rng(options.seed);
  RolloutResult out;
  out.untrained = model.trained_steps == 0;
  out.frames.resize(t_len, model.dim());
  out.latents.resize(t_len, model.dim());
  const Vector no_source;
  for (int t = 0; t < t_len; ++t) {
    const context::RawContext raw = context::raw_context(no_source, audio, t, history_rows(out.frames, t, model.config.encoders.history),
                                                         0, model.config.encoders, context::Variant::Pose);
    const Vector ctx = model.encoders.encode(model.params, raw).row(0).transpose();
    const Vector z = latent::sample_gaussian(model.dim(), rng);
    out.latents.row(t) = z.transpose();
    out.frames.row(t) = model.flow.inverse(model.params, z, ctx, 0).transpose();
  }
  return out;
}

void write_sequence_csv(const std::string& path, const Matrix& frames, const std::string& prefix) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "t";
  for (Eigen::Index j = 0; j < frames.cols(); ++j) out << ',' << prefix << j;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    out << t;
    for (Eigen::Index j = 0; j < frames.cols(); ++j) out << ',' << frames(t, j);
    out << '\n';
  }
}

Matrix read_sequence_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty sequence file " + path);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (first) {
        first = false;
        continue;
      }
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError("non-numeric cell in " + path);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw DataError("ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

}  // namespace emoflow::gen
