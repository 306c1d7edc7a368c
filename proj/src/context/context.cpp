#include "emoflow/context/context.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/ops.hpp"

namespace emoflow::context {

// --- layout -----------------------------------------------------------------

void ContextLayout::append(const std::string& name, int length) {
  segments.push_back({name, total, length});
  total += length;
}

const Segment* ContextLayout::find(const std::string& name) const {
  for (const auto& s : segments)
    if (s.name == name) return &s;
  return nullptr;
}

const Segment& ContextLayout::at(const std::string& name) const {
  const Segment* s = find(name);
  if (!s) throw ArgumentError("context layout has no segment '" + name + "'");
  return *s;
}

Vector ContextVector::segment(const std::string& name) const {
  const Segment& s = layout.at(name);
  return values.segment(s.offset, s.length);
}

// --- audio providers --------------------------------------------------------

Vector AudioFeatureProvider::window(int t, int radius) const {
  const int n = frames(), w = width();
  if (n < 1) throw DataError("audio provider has no frames");
  Vector out(static_cast<Eigen::Index>((2 * radius + 1) * w));
  for (int k = -radius; k <= radius; ++k) {
    const int s = std::clamp(t + k, 0, n - 1);
    out.segment((k + radius) * w, w) = frame(s);
  }
  return out;
}

SignalAudioProvider::SignalAudioProvider(Matrix features) : features_(std::move(features)) {
  if (features_.rows() < 1 || features_.cols() < 1) throw DataError("audio features must be nonempty");
  if (!features_.allFinite()) throw DataError("audio features must be finite");
}

Vector SignalAudioProvider::frame(int t) const {
  if (t < 0 || t >= frames()) throw ArgumentError("audio frame index out of range");
  return features_.row(t).transpose();
}

namespace {
Matrix read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open audio feature file " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError("non-numeric audio feature '" + cell + "' in " + path);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw DataError("ragged audio feature rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("empty audio feature file " + path);
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}
}  // namespace

FileAudioProvider::FileAudioProvider(const std::string& path) : SignalAudioProvider(read_csv_matrix(path)) {}

// --- raw inputs -------------------------------------------------------------

void EncoderConfig::validate() const {
  if (history < 1) throw ConfigError("context: history length tau must be at least 1");
  if (window_radius < 0) throw ConfigError("context: audio window radius must be nonnegative");
  if (coeff_dim < 1 || pose_dim < 1 || classes < 1 || audio_width < 1)
    throw ConfigError("context: dimensions must be positive");
  if (source_features < 1 || audio_hidden < 1 || audio_features < 1 || history_features < 1 || emotion_features < 1)
    throw ConfigError("context: encoder widths must be positive");
}

void RawContext::append(const RawContext& o) {
  auto stack = [](Matrix& a, const Matrix& b) {
    if (a.size() == 0 && a.rows() == 0) {
      a = b;
      return;
    }
    Matrix out(a.rows() + b.rows(), a.cols());
    out << a, b;
    a = std::move(out);
  };
  stack(source, o.source);
  stack(audio, o.audio);
  stack(history, o.history);
  emotion.insert(emotion.end(), o.emotion.begin(), o.emotion.end());
  Vector k(keep.size() + o.keep.size());
  k << keep, o.keep;
  keep = std::move(k);
}

RawContext raw_context(const Vector& source, const AudioFeatureProvider& audio, int t, const Matrix& history,
                       int emotion, const EncoderConfig& config, Variant variant) {
  config.validate();
  if (t < 0) throw ArgumentError("context: negative frame index");
  const bool expr = variant == Variant::Expression;
  const int width = expr ? config.coeff_dim : config.pose_dim;
  if (history.rows() > 0 && history.cols() != width) throw ArgumentError("context: history width mismatch");
  if (audio.width() != config.audio_width) throw ArgumentError("context: audio feature width mismatch");
  RawContext r;
  if (expr) {
    if (source.size() != config.coeff_dim) throw ArgumentError("context: source dimension mismatch");
    if (emotion < 0 || emotion >= config.classes) throw ArgumentError("context: emotion class out of range");
    r.source = source.transpose();
    r.emotion = {emotion};
  } else {
    r.source.resize(1, 0);
  }
  r.audio = audio.window(t, config.window_radius).transpose();
  r.history.resize(1, config.history * width);
  const Eigen::Index have = history.rows();
  for (int k = 0; k < config.history; ++k) {
    // Slot k holds frame t - history + k.
    const Eigen::Index from_end = config.history - k;
    Vector frame;
    if (from_end <= have) frame = history.row(have - from_end).transpose();
    else frame = expr ? source : Vector::Zero(width);
    r.history.block(0, k * width, 1, width) = frame.transpose();
  }
  r.keep = Vector::Ones(1);
  return r;
}

RawContext raw_context(const CoeffSequence& seq, int t, const EncoderConfig& config, Variant variant) {
  if (t < 0 || t >= seq.length()) throw ArgumentError("context: frame index out of range");
  const Matrix& track = variant == Variant::Expression ? seq.beta : seq.pose;
  const int start = std::max(0, t - config.history);
  const SignalAudioProvider audio(seq.audio);
  return raw_context(seq.source, audio, t, track.middleRows(start, t - start), seq.emotion, config, variant);
}

// --- encoders ---------------------------------------------------------------

ContextEncoders ContextEncoders::create(numerics::ParamSet& params, const std::string& prefix,
                                        const EncoderConfig& config, Variant variant, numerics::Rng& rng) {
  config.validate();
  ContextEncoders e;
  e.config_ = config;
  e.variant_ = variant;
  const bool expr = variant == Variant::Expression;
  const int window = (2 * config.window_radius + 1) * config.audio_width;
  const int hist_in = config.history * (expr ? config.coeff_dim : config.pose_dim);

  if (expr) {
    if (config.source == EncoderKind::Learned) {
      e.source_ = nn::Linear::create(params, prefix + ".source", config.coeff_dim, config.source_features, rng);
      e.layout_.append(kSourceSegment, config.source_features);
    } else {
      e.layout_.append(kSourceSegment, config.coeff_dim);
    }
  }
  if (config.audio == EncoderKind::Learned) {
    e.audio_ = nn::Mlp::create(params, prefix + ".audio", {window, config.audio_hidden, config.audio_features}, rng,
                               nn::Activation::Tanh, false);
    e.layout_.append(kAudioSegment, config.audio_features);
  } else {
    e.layout_.append(kAudioSegment, window);
  }
  if (config.history_kind == EncoderKind::Learned) {
    e.history_ = nn::Linear::create(params, prefix + ".history", hist_in, config.history_features, rng);
    e.layout_.append(kHistorySegment, config.history_features);
  } else {
    e.layout_.append(kHistorySegment, hist_in);
  }
  if (expr) {
    if (config.emotion == EncoderKind::Learned) {
      e.emotion_table_ = params.add(prefix + ".emotion", rng.normal_matrix(config.classes, config.emotion_features));
      e.layout_.append(kEmotionSegment, config.emotion_features);
    } else {
      e.layout_.append(kEmotionSegment, config.classes);
    }
  }
  return e;
}

ad::Var ContextEncoders::encode_audio(ad::Tape& tape, const numerics::ParamSet& params, ad::Var window) const {
  return audio_ ? (*audio_)(tape, params, window) : window;
}

ad::Var ContextEncoders::encode_emotion(ad::Tape& tape, const numerics::ParamSet& params,
                                        std::span<const int> classes) const {
  for (int c : classes)
    if (c < 0 || c >= config_.classes) throw ArgumentError("emotion class " + std::to_string(c) + " out of range");
  if (emotion_table_) return ad::gather_rows(tape.param(params, *emotion_table_), classes);
  Matrix onehot = Matrix::Zero(static_cast<Eigen::Index>(classes.size()), config_.classes);
  for (std::size_t i = 0; i < classes.size(); ++i) onehot(static_cast<Eigen::Index>(i), classes[i]) = 1.0;
  return tape.constant(std::move(onehot));
}

ad::Var ContextEncoders::encode(ad::Tape& tape, const numerics::ParamSet& params, const RawContext& raw) const {
  const Eigen::Index b = raw.rows();
  if (raw.keep.size() != b || raw.history.rows() != b) throw ArgumentError("context: raw batch rows disagree");
  std::vector<ad::Var> parts;
  if (variant_ == Variant::Expression) {
    if (raw.source.rows() != b || static_cast<Eigen::Index>(raw.emotion.size()) != b)
      throw ArgumentError("context: raw batch rows disagree");
    ad::Var src = tape.constant(raw.source);
    parts.push_back(source_ ? (*source_)(tape, params, src) : src);
  }
  parts.push_back(encode_audio(tape, params, tape.constant(raw.audio)));
  ad::Var hist = tape.constant(raw.history);
  if (history_) hist = (*history_)(tape, params, hist);
  if ((raw.keep.array() != 1.0).any()) hist = ad::mul_col(hist, tape.constant(raw.keep));
  parts.push_back(hist);
  if (variant_ == Variant::Expression) parts.push_back(encode_emotion(tape, params, raw.emotion));
  return ad::concat_cols(parts);
}

Matrix ContextEncoders::encode(const numerics::ParamSet& params, const RawContext& raw) const {
  ad::Tape tape(ad::Tape::Mode::Inference);
  return encode(tape, params, raw).value();
}

ContextVector assemble_context(const CoeffSequence& seq, int t, const ContextEncoders& encoders,
                               const numerics::ParamSet& params) {
  const RawContext raw = raw_context(seq, t, encoders.config(), encoders.variant());
  return {encoders.encode(params, raw).row(0).transpose(), encoders.layout(), false};
}

ContextVector apply_data_dropout(const ContextVector& c, double p, numerics::Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ArgumentError("dropout probability must lie in [0, 1]");
  ContextVector out = c;
  if (p > 0.0 && rng.bernoulli(p)) {
    const Segment& s = c.layout.at(kHistorySegment);
    out.values.segment(s.offset, s.length).setZero();
    out.history_dropped = true;
  }
  return out;
}

Vector dropout_keep_mask(Eigen::Index rows, double p, numerics::Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ArgumentError("dropout probability must lie in [0, 1]");
  Vector keep(rows);
  for (Eigen::Index i = 0; i < rows; ++i) keep[i] = (p > 0.0 && rng.bernoulli(p)) ? 0.0 : 1.0;
  return keep;
}

}  // namespace emoflow::context
