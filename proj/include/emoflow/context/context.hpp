#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emoflow/context/synthetic.hpp"
#include "emoflow/numerics/autodiff.hpp"
#include "emoflow/numerics/nn.hpp"
#include "emoflow/numerics/rng.hpp"

namespace emoflow::context {

enum class Variant { Expression, Pose };

struct Segment {
  std::string name;
  int offset = 0;
  int length = 0;
};

inline constexpr const char* kSourceSegment = "source";
inline constexpr const char* kAudioSegment = "audio";
inline constexpr const char* kHistorySegment = "history";
inline constexpr const char* kEmotionSegment = "emotion";

/// Named, contiguous segments of a context vector.
struct ContextLayout {
  std::vector<Segment> segments;
  int total = 0;

  void append(const std::string& name, int length);
  const Segment* find(const std::string& name) const;
  const Segment& at(const std::string& name) const;
};

struct ContextVector {
  Vector values;
  ContextLayout layout;
  bool history_dropped = false;

  Vector segment(const std::string& name) const;
};

/// Per-frame audio features addressed by frame index.
class AudioFeatureProvider {
 public:
  virtual ~AudioFeatureProvider() = default;
  virtual int frames() const = 0;
  virtual int width() const = 0;
  virtual Vector frame(int t) const = 0;
  /// Frames t-r..t+r concatenated, indices clamped to the valid range.
  Vector window(int t, int radius) const;
};

/// Features held in memory, e.g. the synthetic driving signal of a sequence.
class SignalAudioProvider : public AudioFeatureProvider {
 public:
  explicit SignalAudioProvider(Matrix features);
  int frames() const override { return static_cast<int>(features_.rows()); }
  int width() const override { return static_cast<int>(features_.cols()); }
  Vector frame(int t) const override;
  const Matrix& features() const { return features_; }

 private:
  Matrix features_;
};

/// Precomputed per-frame features from a CSV file (one row per frame, no header).
class FileAudioProvider : public SignalAudioProvider {
 public:
  explicit FileAudioProvider(const std::string& path);
};

enum class EncoderKind { Identity, Learned };

struct EncoderConfig {
  int coeff_dim = 64;
  int pose_dim = 6;
  int classes = 4;
  int audio_width = 1;     // features per audio frame
  int window_radius = 2;   // audio window is 2r+1 frames
  int history = 5;         // tau previous frames
  EncoderKind source = EncoderKind::Learned;
  int source_features = 16;
  EncoderKind audio = EncoderKind::Learned;
  int audio_hidden = 32;
  int audio_features = 16;
  EncoderKind history_kind = EncoderKind::Learned;
  int history_features = 64;  // at least one frame wide, or held-out clips cannot be tracked
  EncoderKind emotion = EncoderKind::Learned;  // Identity = one-hot
  int emotion_features = 16;

  void validate() const;
};

/// Unencoded per-frame inputs, one row per frame.
struct RawContext {
  Matrix source;   // B x D (empty for pose)
  Matrix audio;    // B x (2r+1)F
  Matrix history;  // B x tau*(D or pose_dim), oldest frame first
  std::vector<int> emotion;  // empty for pose
  Vector keep;     // B, 1 keeps the history segment, 0 zeroes it

  Eigen::Index rows() const { return audio.rows(); }
  void append(const RawContext& other);
};

/// Gathers the raw inputs for frame t. History frames before the start are
/// beta_0 for the expression variant and zeros for the pose variant.
RawContext raw_context(const CoeffSequence& seq, int t, const EncoderConfig& config, Variant variant);
/// Same, for an arbitrary audio provider and an explicit history buffer
/// (rows = previous frames, most recent last; may be shorter than tau).
RawContext raw_context(const Vector& source, const AudioFeatureProvider& audio, int t, const Matrix& history,
                       int emotion, const EncoderConfig& config, Variant variant);

/// Source, audio, history and emotion encoders whose weights live in a caller-owned ParamSet.
class ContextEncoders {
 public:
  static ContextEncoders create(numerics::ParamSet& params, const std::string& prefix, const EncoderConfig& config,
                                Variant variant, numerics::Rng& rng);

  /// B x layout().total, with the history segment multiplied by raw.keep.
  ad::Var encode(ad::Tape& tape, const numerics::ParamSet& params, const RawContext& raw) const;
  Matrix encode(const numerics::ParamSet& params, const RawContext& raw) const;
  ad::Var encode_audio(ad::Tape& tape, const numerics::ParamSet& params, ad::Var window) const;
  ad::Var encode_emotion(ad::Tape& tape, const numerics::ParamSet& params, std::span<const int> classes) const;

  const ContextLayout& layout() const { return layout_; }
  const EncoderConfig& config() const { return config_; }
  Variant variant() const { return variant_; }
  int dim() const { return layout_.total; }
  std::optional<std::size_t> emotion_table() const { return emotion_table_; }

 private:
  EncoderConfig config_;
  Variant variant_ = Variant::Expression;
  ContextLayout layout_;
  std::optional<nn::Linear> source_;
  std::optional<nn::Mlp> audio_;
  std::optional<nn::Linear> history_;
  std::optional<std::size_t> emotion_table_;
};

/// Encoded context for frame t of a sequence.
ContextVector assemble_context(const CoeffSequence& seq, int t, const ContextEncoders& encoders,
                               const numerics::ParamSet& params);

/// With probability p zeroes the whole history segment and records it.
ContextVector apply_data_dropout(const ContextVector& c, double p, numerics::Rng& rng);
/// One Bernoulli(1-p) keep flag per row.
Vector dropout_keep_mask(Eigen::Index rows, double p, numerics::Rng& rng);

}  // namespace emoflow::context
