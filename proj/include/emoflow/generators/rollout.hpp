#pragma once

#include <optional>
#include <string>

#include "emoflow/generators/latent_bank.hpp"
#include "emoflow/generators/models.hpp"

namespace emoflow::gen {

struct RolloutOptions {
  enum class Mode { Random, Transfer };
  Mode mode = Mode::Random;
  bool project = true;
  std::uint64_t seed = 0;
  int length = 0;  // 0: audio length
};

struct RolloutResult {
  Matrix frames;   // T x D
  Matrix latents;  // T x D, the latents actually inverted
  bool untrained = false;
};

/// Autoregressive generation: each frame's history slots hold previously
/// generated frames. Random mode samples the class component (projected onto
/// the bank rows of that class when options.project and a bank is given);
/// Transfer mode inverts `transfer_latents` row by row.
RolloutResult rollout_expression(const ExpFlowModel& model, const Vector& source,
                                 const context::AudioFeatureProvider& audio, int emotion,
                                 const RolloutOptions& options, const LatentBank* bank = nullptr,
                                 const Matrix* transfer_latents = nullptr);

/// Latents of a reference clip under its own contexts and class.
Matrix reference_latents(const ExpFlowModel& model, const context::CoeffSequence& reference);

/// Drives the target's source/audio with the reference's latents and class.
/// Projection is off unless options.project is set and a bank is given.
RolloutResult emotion_transfer(const ExpFlowModel& model, const context::CoeffSequence& reference,
                               const Vector& target_source, const context::AudioFeatureProvider& target_audio,
                               RolloutOptions options, const LatentBank* bank = nullptr);

RolloutResult rollout_pose(const PoseFlowModel& model, const context::AudioFeatureProvider& audio,
                           const RolloutOptions& options);

/// One row per frame: t followed by the frame's columns named prefix0..prefixN.
void write_sequence_csv(const std::string& path, const Matrix& frames, const std::string& prefix);
Matrix read_sequence_csv(const std::string& path);

}  // namespace emoflow::gen
